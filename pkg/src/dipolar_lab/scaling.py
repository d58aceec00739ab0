"""Sweeps over N comparing the scaled equation with its limit, and rate fits."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, InconclusiveFitError, UsageError
from .gp import Equation, GPIntegrator, GPState, PotentialSpec, mass

__all__ = ["SweepPlan", "SweepRow", "SweepResult", "RateFit", "run_sweep", "fit_rate",
           "SWEEP_COLUMNS"]

SWEEP_COLUMNS = ("N", "error_l2", "error_density_l1", "mass_drift", "energy_drift")


@dataclass(frozen=True)
class SweepPlan:
    """Everything shared by the trajectories of one sweep.

    ``pot.N`` is ignored; each entry of ``Ns`` replaces it in turn.  ``beta``
    overrides ``pot.beta``.
    """

    beta: float
    Ns: tuple
    t_final: float
    initial: GPState
    pot: PotentialSpec
    dt: float
    workers: int = 1

    def __post_init__(self):
        Ns = tuple(float(N) if math.isinf(N) else int(N) for N in self.Ns)
        if len(Ns) < 2:
            raise UsageError("a sweep needs at least two values of N")
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise UsageError(f"Ns must be strictly increasing, got {Ns}")
        if not self.t_final > 0 or not self.dt > 0:
            raise UsageError("t_final and dt must be positive")
        object.__setattr__(self, "Ns", Ns)
        if self.pot.beta != self.beta:
            object.__setattr__(self, "pot", replace(self.pot, beta=self.beta))

    @property
    def grid(self):
        return self.initial.grid

    def describe(self):
        p = self.pot
        return {
            "beta": self.beta, "Ns": list(self.Ns), "t_final": self.t_final, "dt": self.dt,
            "grid": {"n": self.grid.n, "L": self.grid.L},
            "potential": {"a": p.a, "b": p.b, "R": p.R, "w0_kind": p.w0_kind,
                          "w0_width": p.w0_width, "kernel": p.kernel.kind,
                          "axis": list(p.kernel.axis)},
        }


@dataclass(frozen=True)
class SweepRow:
    N: float
    error_l2: float
    error_density_l1: float
    mass_drift: float
    energy_drift: float


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: list
    limit: GPState = field(repr=False)

    @property
    def Ns(self):
        return [r.N for r in self.rows]

    @property
    def errors(self):
        return [r.error_l2 for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                N = "inf" if math.isinf(r.N) else str(int(r.N))
                w.writerow([N] + [repr(float(getattr(r, c))) for c in SWEEP_COLUMNS[1:]])


def _scaled_run(plan, N):
    pot = plan.pot.with_N(N)
    integ = GPIntegrator(plan.grid, pot, Equation.SCALED)
    start = GPState(plan.initial.psi, plan.initial.t, Equation.SCALED)
    e0 = integ.energy(start)
    try:
        final = integ.run(start, plan.dt, plan.initial.t + plan.t_final)
    except DivergenceError as exc:
        raise DivergenceError(f"N={N}: {exc}", step=exc.step, t=exc.t, N=N) from exc
    drift_e = abs(integ.energy(final) - e0) / max(abs(e0), 1e-300)
    drift_m = abs(mass(final) - mass(start))
    return final, drift_m, drift_e


def run_sweep(plan):
    """Integrate the limiting equation once and the scaled equation per N.

    Returns a :class:`SweepResult` whose rows hold the L^2 distance of the
    (gauged) wavefunctions and the L^1 distance of the densities at
    ``t_final``.
    """
    g = plan.grid
    limit_pot = plan.pot.with_N(plan.Ns[-1])
    start = GPState(plan.initial.psi, plan.initial.t, Equation.LIMITING)
    limit = GPIntegrator(g, limit_pot, Equation.LIMITING).run(start, plan.dt,
                                                              plan.initial.t + plan.t_final)
    phi = limit.psi.values
    rho = np.abs(phi) ** 2

    def one(N):
        final, dm, de = _scaled_run(plan, N)
        u = final.psi.values
        err = float(np.sqrt(np.sum(np.abs(u - phi) ** 2) * g.dx**3))
        derr = float(np.sum(np.abs(np.abs(u) ** 2 - rho)) * g.dx**3)
        return SweepRow(N, err, derr, dm, de)

    if plan.workers > 1:
        with ThreadPoolExecutor(plan.workers) as pool:
            rows = list(pool.map(one, plan.Ns))
    else:
        rows = [one(N) for N in plan.Ns]
    return SweepResult(plan, rows, limit)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    Ns: tuple
    errors: tuple

    def within(self, target, tol):
        return abs(self.slope - target) <= tol

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "Ns": list(self.Ns), "errors": list(self.errors)}


def fit_rate(Ns, errors, floor=1e-12):
    """Least-squares line through (log N, log error).

    ``residual`` is the root-mean-square deviation of the log errors from the
    line.
    """
    Ns = np.asarray(Ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if Ns.size != errors.size:
        raise UsageError("Ns and errors differ in length")
    if Ns.size < 3:
        raise InconclusiveFitError(f"rate fit needs at least 3 points, got {Ns.size}")
    if not np.all(np.isfinite(Ns)):
        raise UsageError("rate fit needs finite N")
    if np.any(errors <= floor):
        raise InconclusiveFitError(
            f"errors at or below {floor:g} sit at the floating-point floor; "
            "increase t_final or coarsen the tolerance")
    x, y = np.log(Ns), np.log(errors)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    return RateFit(float(slope), float(intercept), resid, tuple(Ns.tolist()), tuple(errors.tolist()))


def write_summary(path, plan, fit, extra=None):
    payload = {"plan": plan.describe(), "fit": fit.to_dict() if fit else None}
    payload.update(extra or {})
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
