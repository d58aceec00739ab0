"""Reduced density matrices and the many-body vs Bogoliubov comparison table."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError, ValidationError
from .bogoliubov import build_hamiltonian, condensate_state, excitation_inverse, excitation_map
from .dynamics import evolve_exact, propagate
from .modes import ModeBasis
from .space import FockSpace

__all__ = ["reduced_density", "trace_norm", "ReportRow", "theorem1_report", "write_report",
           "REPORT_COLUMNS"]

REPORT_COLUMNS = ("N", "t", "norm_error", "trace_error", "norm_drift", "a_u_residual")


def reduced_density(psi, k=1):
    """k-body density matrix with unit trace.

    k=1: gamma[p, q] = <a*_q a_p> / N.
    k=2: gamma[(p,q), (r,s)] = <a*_r a*_s a_q a_p> / (N (N-1)), flattened to m^2 x m^2.
    """
    space = psi.space
    sectors = psi.support_sectors(1e-14 * max(psi.norm(), 1.0))
    if len(sectors) != 1:
        raise ValidationError("reduced density needs a vector in a single particle-number sector")
    N = sectors[0]
    if abs(psi.norm() - 1) > 1e-10:
        raise ValidationError("reduced density needs a normalized vector")
    c = psi.coeffs
    m = space.m
    if k == 1:
        if N < 1:
            raise ValidationError("one-body density needs N >= 1")
        lowered = (space.stacked_single @ c).reshape(m, -1)
        return lowered @ lowered.conj().T / N
    if k == 2:
        if N < 2:
            raise ValidationError("two-body density needs N >= 2")
        lowered = (space.stacked_pair @ c).reshape(m * m, -1)
        return lowered @ lowered.conj().T / (N * (N - 1))
    raise UsageError(f"reduced density order must be 1 or 2, got {k!r}")


def trace_norm(A):
    return float(np.sum(np.linalg.svd(np.asarray(A), compute_uv=False)))


@dataclass(frozen=True)
class ReportRow:
    N: int
    t: float
    norm_error: float
    trace_error: float
    norm_drift: float
    a_u_residual: float


def theorem1_report(make_basis, Ns, t_final, dt, u0, extra_cap=6, samples=None):
    """Compare exact N-body dynamics of u0^{(x)N} with its Bogoliubov approximation.

    ``make_basis(N)`` returns the :class:`ModeBasis` for particle number N.
    The Bogoliubov vector lives in F^{<= N + extra_cap}.  ``samples`` lists
    the reported times (default: ``t_final`` only); they are rounded to the
    step grid.
    """
    u0 = np.asarray(u0, dtype=complex)
    u0 = u0 / np.linalg.norm(u0)
    nsteps = max(1, int(round(t_final / dt)))
    h = t_final / nsteps
    samples = [t_final] if samples is None else list(samples)
    idx = sorted({int(round(t / h)) for t in samples})
    if idx[0] < 0 or idx[-1] > nsteps:
        raise UsageError("sample times must lie in [0, t_final]")
    rows = []
    for N in Ns:
        basis = make_basis(N)
        if not isinstance(basis, ModeBasis):
            raise UsageError("make_basis must return a ModeBasis")
        space = FockSpace(basis.m, N + extra_cap)
        psi0 = condensate_state(space, u0, N)
        phi0 = excitation_map(psi0, u0, N)
        traj = propagate(space, basis, u0, phi0, t_final, h)
        H = build_hamiltonian(basis, N, space)
        exact = evolve_exact(H, psi0, [traj.times[i] for i in idx], N)
        n0 = phi0.norm()
        for psi, i in zip(exact, idx):
            t, phi, u = traj.times[i], traj.states[i], traj.modes[i]
            approx = excitation_inverse(phi, u, N)
            norm_err = float(np.linalg.norm(psi.coeffs - approx.coeffs))
            gamma = reduced_density(psi, 1)
            trace_err = trace_norm(gamma - np.outer(u, u.conj()))
            a_u = float(np.linalg.norm(space.annihilate(u) @ phi.coeffs))
            rows.append(ReportRow(int(N), t, norm_err, trace_err, abs(phi.norm() - n0), a_u))
    return rows


def write_report(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.N] + [repr(float(getattr(r, c))) for c in REPORT_COLUMNS[1:]])
