"""Command-line entry point: ``dipolar-lab <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import default_text, load_config, read_kernel_table
from .errors import KernelValidationError, LabError, ValidationError
from .spectral import Grid3, set_fft_workers

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_DIVERGENCE = 0, 1, 2, 3


def _provenance(cfg, command, started, wall0):
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "version": __version__,
        "started": started,
        "elapsed_seconds": round(time.perf_counter() - wall0, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _kernel_spec(cfg):
    from .kernel import KernelSpec

    k = cfg.kernel
    if k.omega == "dipolar":
        return KernelSpec.dipolar(k.axis, k.R)
    path = Path(k.omega)
    if not path.is_absolute():
        path = cfg.base_dir / path
    degree, values = read_kernel_table(path)
    return KernelSpec("table", R=k.R, table=values, table_degree=degree)


def _potential(cfg, N=2.0):
    from .gp import PotentialSpec

    p = cfg.potential
    return PotentialSpec(a=p.a, b=p.b, R=cfg.kernel.R, beta=p.beta, N=N, w0_kind=p.w0_kind,
                         w0_width=p.w0_width, kernel=_kernel_spec(cfg).validate())


# --- kernel-check -------------------------------------------------------------

def cmd_kernel_check(cfg, out, args):
    from .kernel import (dipolar_full, fibonacci_directions, inner_truncated_transform,
                         large_radius_limit, truncation_bound_scan)

    spec = _kernel_spec(cfg)
    c = cfg.checks
    parity = spec.parity_residual()
    residual = spec.cancellation_residual()
    checks = {
        "parity": {"value": parity, "tol": c.cancellation_tol, "ok": parity <= c.cancellation_tol},
        "cancellation": {"value": residual, "tol": c.cancellation_tol,
                         "ok": abs(residual) <= c.cancellation_tol},
    }
    if not (checks["parity"]["ok"] and checks["cancellation"]["ok"]):
        bad = "parity" if not checks["parity"]["ok"] else "cancellation"
        raise KernelValidationError(
            f"kernel rejected: {bad} residual {checks[bad]['value']:.6g} exceeds {c.cancellation_tol:g}",
            checks[bad]["value"])
    spec.validate(c.cancellation_tol)

    dirs = fibonacci_directions(c.bound_directions)
    constant = truncation_bound_scan(spec, dirs, c.bound_kR)
    checks["truncation_bound"] = {"value": constant, "tol": c.bound_constant,
                                  "ok": constant <= c.bound_constant}

    rows = []
    worst = 0.0
    for d in fibonacci_directions(c.limit_samples):
        kvec = d * (c.limit_kR / spec.R)
        quad = inner_truncated_transform(spec, kvec)
        if spec.is_dipolar:
            ref = float(dipolar_full(kvec, spec.axis))
        else:
            ref = large_radius_limit(spec, d)
        worst = max(worst, abs(quad - ref))
        rows.append((*d, quad, ref, abs(quad - ref)))
    checks["large_radius_limit"] = {"value": worst, "tol": c.limit_tol, "ok": worst <= c.limit_tol}

    with open(out / "kernel_limit.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("kx", "ky", "kz", "quadrature", "reference", "abs_diff"))
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    failing = [name for name, chk in checks.items() if not chk["ok"]]
    for name, chk in checks.items():
        print(f"{name:20s} {chk['value']:.3e} (tol {chk['tol']:.1e}) {'ok' if chk['ok'] else 'FAILED'}")
    return {"checks": checks, "failing": failing}, (EXIT_NUMERICAL if failing else EXIT_OK)


# --- gp-run -----------------------------------------------------------------

def cmd_gp_run(cfg, out, args):
    from .gp import (Equation, GPIntegrator, bump_state, gaussian_state, mass,
                     run_with_diagnostics, stability_predicate)
    from .errors import DivergenceError

    d = cfg.dynamics
    grid = Grid3(cfg.grid.n, cfg.grid.L)
    eq = Equation(d.equation)
    pot = _potential(cfg, N=d.N)
    report = stability_predicate(pot, grid)
    stability = {"classification": report.classification.value, "min_w_hat": report.min_w_hat,
                 "a_plus_b_inf_K": report.a_plus_b_min_K}
    print(f"stability: {report.classification.value} (min w_hat {report.min_w_hat:.4g}, "
          f"a + b inf K {report.a_plus_b_min_K:.4g})")
    if report.classification.value == "conditional" and not args.allow_conditional:
        raise ValidationError("interaction is in the conditional regime; pass --allow-conditional to run anyway")

    if d.initial == "gaussian":
        state = gaussian_state(grid, d.initial_width, equation=eq)
    else:
        state = bump_state(grid, d.initial_width, equation=eq)
    integ = GPIntegrator(grid, pot, eq, dealias=d.dealias)
    snap_dir = None
    if d.snapshot_stride:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
    e0, m0 = integ.energy(state), mass(state)
    summary = {"stability": stability, "equation": eq.value, "dt": d.dt, "t_final": d.t_final}
    try:
        final, _ = run_with_diagnostics(integ, state, d.dt, d.t_final, out / "diagnostics.csv",
                                        every=d.diagnostics_every, snapshot_dir=snap_dir,
                                        snapshot_stride=d.snapshot_stride)
    except DivergenceError as exc:
        summary.update(status="diverged", error=str(exc), step=exc.step, t=exc.t)
        print(f"divergence: {exc}", file=sys.stderr)
        return summary, EXIT_DIVERGENCE
    summary.update(
        status="ok",
        mass_drift=abs(mass(final) - m0),
        energy_drift_relative=_finite(abs(integ.energy(final) - e0) / abs(e0)) if e0 else None,
        energy_initial=e0,
    )
    print(f"mass drift {summary['mass_drift']:.3e}, relative energy drift {summary['energy_drift_relative']}")
    return summary, EXIT_OK


# --- converge -----------------------------------------------------------------

def cmd_converge(cfg, out, args):
    from .gp import gaussian_state, bump_state
    from .scaling import SweepPlan, fit_rate, run_sweep

    s, d = cfg.sweep, cfg.dynamics
    grid = Grid3(cfg.grid.n, cfg.grid.L)
    init = (gaussian_state(grid, d.initial_width) if d.initial == "gaussian"
            else bump_state(grid, d.initial_width))
    plan = SweepPlan(beta=cfg.potential.beta, Ns=s.Ns, t_final=s.t_final, initial=init,
                     pot=_potential(cfg), dt=s.dt, workers=args.threads or 1)
    result = run_sweep(plan)
    result.write_csv(out / "sweep.csv")
    fit = fit_rate(result.Ns, result.errors)
    ok = fit.within(-plan.beta, s.slope_tolerance)
    for r in result.rows:
        print(f"N={int(r.N):6d}  error_l2={r.error_l2:.6e}  density_l1={r.error_density_l1:.6e}")
    print(f"slope {fit.slope:.4f} (target {-plan.beta:.4f} +/- {s.slope_tolerance}), "
          f"residual {fit.residual:.3e}: {'ok' if ok else 'outside tolerance'}")
    summary = {"plan": plan.describe(), "fit": fit.to_dict(), "target_slope": -plan.beta,
               "slope_tolerance": s.slope_tolerance, "within_tolerance": ok}
    return summary, EXIT_OK if ok else EXIT_NUMERICAL


# --- fock -----------------------------------------------------------------------

def _structural_suite(f, make_basis, u0):
    from .fock import (ERROR_TERM_COMMUTATORS, FockSpace, build_error_terms, excitation_matrix,
                       generator_identity_residual, number_operator)

    results = []
    for N in f.N_list:
        basis = make_basis(N)
        space = FockSpace(basis.m, N)
        U = excitation_matrix(space, u0, N)
        unit = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[1]))))
        results.append(("unitarity", N, unit))
        comp, _ = generator_identity_residual(basis, u0, N, space)
        results.append(("generator_identity", N, comp))
        Nop = number_operator(space)
        terms = build_error_terms(space, basis, u0, N)
        worst = max(float(abs((R.commutator(Nop) - ERROR_TERM_COMMUTATORS[j] * R).matrix).max())
                    for j, R in terms.items())
        results.append(("commutators", N, worst))
    return results


def cmd_fock(cfg, out, args):
    from .fock import (FockSpace, ModeBasis, build_bogoliubov, build_generator, build_hamiltonian,
                       theorem1_report, write_coo, write_report)

    f = cfg.fock
    u0 = np.asarray(f.u0, dtype=complex)
    u0 = u0 / np.linalg.norm(u0)

    def make_basis(N):
        return ModeBasis.plane_waves(f.m, f.ell, f.coupling, f.width, f.beta, N)

    suite = _structural_suite(f, make_basis, u0)
    failing = [(name, N, v) for name, N, v in suite if not v <= f.identity_tol]
    for name, N, v in suite:
        print(f"{name:20s} N={N}  {v:.3e}  {'ok' if v <= f.identity_tol else 'FAILED'}")
    summary = {"structural": [{"check": n, "N": N, "max_error": v} for n, N, v in suite]}
    if failing:
        summary["status"] = "structural identities failed"
        return summary, EXIT_NUMERICAL

    if f.dump_operators:
        N = f.N_list[0]
        basis = make_basis(N)
        space = FockSpace(f.m, N)
        write_coo(out / f"H_{N}.coo", build_hamiltonian(basis, N, space))
        write_coo(out / "bogoliubov.coo", build_bogoliubov(space, basis, u0))
        write_coo(out / f"generator_{N}.coo", build_generator(space, basis, u0, N))

    rows = theorem1_report(make_basis, f.N_list, f.t_final, f.dt, u0, extra_cap=f.extra_cap)
    write_report(out / "theorem1.csv", rows)
    for r in rows:
        print(f"N={r.N}  t={r.t:.3f}  norm_error={r.norm_error:.4e}  trace_error={r.trace_error:.4e}")
    summary["status"] = "ok"
    summary["rows"] = [r.__dict__ for r in rows]
    return summary, EXIT_OK


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "gp-run": cmd_gp_run,
    "converge": cmd_converge,
    "fock": cmd_fock,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dipolar-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI configuration file (defaults if omitted)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        p.add_argument("--allow-conditional", action="store_true",
                       help="run interactions outside the unconditional stability regimes")
        p.add_argument("--print-defaults", action="store_true", dest="print_defaults_sub",
                       help="print the default configuration and exit")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults or getattr(args, "print_defaults_sub", False):
        sys.stdout.write(default_text())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION

    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    wall0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.threads:
            set_fft_workers(args.threads)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        summary, code = COMMANDS[args.command](cfg, out, args)
    except KernelValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _try_summary(args, {"status": "rejected", "error": str(exc), "residual": exc.residual})
        return EXIT_VALIDATION
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _try_summary(args, {"status": "failed", "error": str(exc)})
        return exc.exit_code
    summary["provenance"] = _provenance(cfg, args.command, started, wall0)
    _write_json(out / "summary.json", summary)
    return code


def _try_summary(args, payload):
    out = getattr(args, "out", None)
    if out is not None and out.is_dir():
        _write_json(out / "summary.json", payload)


if __name__ == "__main__":
    sys.exit(main())
