"""Time propagation on Fock space and of the condensate mode vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import expm_multiply

from ..errors import StepSizeError, UsageError
from .bogoliubov import frame_generator, mean_field
from .space import FockVector

__all__ = ["Trajectory", "evolve", "hartree_half_step", "propagate_modes", "propagate",
           "evolve_exact"]


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    modes: list = field(default_factory=list)

    def append(self, t, state, u=None):
        self.times.append(float(t))
        self.states.append(state)
        if u is not None:
            self.modes.append(np.array(u))

    @property
    def final(self):
        return self.states[-1]


def _steps(t_final, dt):
    if not dt > 0 or t_final < 0:
        raise UsageError("need dt > 0 and t_final >= 0")
    n = max(1, int(round(t_final / dt)))
    return n, t_final / n


def _expm_apply(matrix, vec, tau, norm_tol):
    out = expm_multiply(-1j * tau * matrix, vec)
    n0, n1 = np.linalg.norm(vec), np.linalg.norm(out)
    if not np.all(np.isfinite(out)) or abs(n1 - n0) > norm_tol * max(n0, 1.0):
        raise StepSizeError(f"matrix exponential lost accuracy (norm {n0:.15g} -> {n1:.15g}); reduce dt")
    return out


def evolve(builder, phi0, t_final, dt, record_every=1, norm_tol=1e-10):
    """Midpoint-exponential propagation phi <- exp(-i dt H(t + dt/2)) phi.

    ``builder(t)`` returns the (Hermitian) :class:`OperatorMatrix` at time t.
    """
    nsteps, h = _steps(t_final, dt)
    traj = Trajectory()
    traj.append(0.0, phi0)
    c = phi0.coeffs
    for i in range(1, nsteps + 1):
        op = builder((i - 0.5) * h)
        c = _expm_apply(op.matrix, c, h, norm_tol)
        if i % record_every == 0 or i == nsteps:
            traj.append(i * h, FockVector(phi0.space, c))
    return traj


def hartree_half_step(basis, u, dt):
    """One step of i u' = h_hartree(u) u with a predicted midpoint generator.

    Returns ``(V_half, h_mid)``; the step is u -> V_half @ V_half @ u, and
    V_half @ u is the midpoint value.
    """
    pred = scipy.linalg.expm(-0.5j * dt * mean_field(basis, u).h_hartree) @ u
    pred /= np.linalg.norm(pred)
    h_mid = mean_field(basis, pred).h_hartree
    return scipy.linalg.expm(-0.5j * dt * h_mid), h_mid


def propagate_modes(basis, u0, t_final, dt):
    nsteps, h = _steps(t_final, dt)
    u = np.asarray(u0, dtype=complex)
    us = [u]
    for _ in range(nsteps):
        V, _ = hartree_half_step(basis, u, h)
        u = V @ (V @ u)
        us.append(u)
    return np.array(us)


def propagate(space, basis, u0, phi0, t_final, dt, N=None, M=None, record_every=1,
              norm_tol=1e-10, **r3):
    """Propagate the condensate and the excitation vector together.

    ``N=None`` integrates the Bogoliubov equation; otherwise the localized
    dynamics generated by 1(<=M) G_N 1(<=M) (M defaults to N).  Each step is

        Gamma(V) exp(-i dt B(u_mid)) Gamma(V),   V = exp(-i dt/2 h_hartree(mid)),

    where B is the generator with dGamma(h_hartree) removed.  Gamma(V) moves
    F(H_+) along with u and B preserves it, so a(u(t)) Phi(t) = 0 and the
    particle-number localization are kept to rounding error.
    """
    if phi0.space != space:
        raise UsageError("initial vector lives on a different Fock space")
    nsteps, h = _steps(t_final, dt)
    u = np.asarray(u0, dtype=complex)
    c = phi0.coeffs
    traj = Trajectory()
    traj.append(0.0, phi0, u)
    for i in range(1, nsteps + 1):
        V, h_mid = hartree_half_step(basis, u, h)
        frame = space.one_body(h_mid)
        c = _expm_apply(frame, c, 0.5 * h, norm_tol)
        u_mid = V @ u
        B = frame_generator(space, basis, u_mid, N=N, M=M, **r3).matrix
        c = _expm_apply(B, c, h, norm_tol)
        c = _expm_apply(frame, c, 0.5 * h, norm_tol)
        u = V @ u_mid
        if i % record_every == 0 or i == nsteps:
            traj.append(i * h, FockVector(space, c), u)
    return traj


def evolve_exact(H, psi0, times, sector):
    """exp(-i t H) psi0 for a particle-conserving H, diagonalized on one sector."""
    s = H.space.sector(sector)
    w, Z = np.linalg.eigh(H.sector_block(sector).toarray())
    z0 = Z.conj().T @ psi0.coeffs[s]
    out = []
    for t in times:
        c = np.zeros(H.space.dim, complex)
        c[s] = Z @ (np.exp(-1j * w * t) * z0)
        out.append(FockVector(H.space, c))
    return out
