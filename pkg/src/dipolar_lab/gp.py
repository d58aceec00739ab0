"""Strang-split integration of the dipolar GP equation and its N-scaled form.

Two equations share the machinery:

* limiting:  i d_t phi = (-Lap + a|phi|^2 + b K*|phi|^2 - mu(t)) phi
* scaled:    i d_t u   = (-Lap + w_N*|u|^2 - mu_N(t)) u,
  with w = w0 + b 1_{|x|>R} K and w_N_hat(k) = w_hat(k / N^beta).

In both cases mu is half the interaction energy, so the potential phase is
exp(-i (V - mu) dt/2) with V the mean-field potential.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DivergenceError, UsageError, ValidationError
from .kernel import DIPOLAR_INF, KernelSpec, exterior_multiplier, full_multiplier
from .spectral import (Field, Grid3, MultiplierTable, Space, dealias_mask, forward_array,
                       inverse_array, write_field)

__all__ = [
    "Equation",
    "PotentialSpec",
    "GPState",
    "GPIntegrator",
    "Stability",
    "gaussian_state",
    "bump_state",
    "plane_wave_state",
    "chemical_potential",
    "energy",
    "sobolev_norm",
    "mass",
    "step_strang",
    "stability_predicate",
    "default_dt",
    "DIAGNOSTIC_COLUMNS",
]


class Equation(enum.Enum):
    LIMITING = "limiting"
    SCALED = "scaled"


@dataclass(frozen=True)
class PotentialSpec:
    """Interaction w = w0 + b 1_{|x|>R} K with scaling w_N(x) = N^{3 beta} w(N^beta x).

    ``w0_kind`` is ``"gaussian"`` (width ``w0_width`` = standard deviation) or
    ``"ball"`` (uniform on the ball of radius ``w0_width``); both are
    normalized so that int w0 = ``a``.  ``N = inf`` selects the k -> 0 limit
    of the scaled multiplier, which coincides with the limiting equation.
    """

    a: float = 1.0
    b: float = 0.0
    R: float = 1.0
    beta: float = 0.25
    N: float = 2.0
    w0_kind: str = "gaussian"
    w0_width: float = 0.5
    kernel: KernelSpec = field(default_factory=KernelSpec.dipolar)

    def __post_init__(self):
        if self.w0_kind not in ("gaussian", "ball"):
            raise ValidationError(f"unknown w0 kind {self.w0_kind!r}")
        if not self.w0_width > 0:
            raise ValidationError("w0 width must be positive")
        if self.b < 0:
            raise ValidationError("dipolar coupling b must be >= 0")
        if not self.R > 0:
            raise ValidationError("truncation radius R must be positive")
        if not self.beta > 0:
            raise ValidationError("scaling exponent beta must be positive")
        if not self.N >= 2:
            raise ValidationError("particle number N must be >= 2")
        if self.kernel.R != self.R:
            object.__setattr__(self, "kernel", self.kernel.with_R(self.R))

    def with_N(self, N):
        return replace(self, N=N)

    def w0_hat(self, k):
        """Closed-form transform of w0 at |k| (array)."""
        k = np.asarray(k, dtype=float)
        s = self.w0_width
        if self.w0_kind == "gaussian":
            return self.a * np.exp(-0.5 * (s * k) ** 2)
        x = s * k
        small = x < 1e-3
        xs = np.where(small, 1.0, x)
        val = 3 * (np.sin(xs) - xs * np.cos(xs)) / xs**3
        return self.a * np.where(small, 1 - x**2 / 10, val)

    def w0_real(self, r):
        """w0 in position space at radius ``r``."""
        r = np.asarray(r, dtype=float)
        s = self.w0_width
        if self.w0_kind == "gaussian":
            return self.a * (2 * np.pi * s**2) ** -1.5 * np.exp(-0.5 * (r / s) ** 2)
        return np.where(r < s, self.a / (4 * np.pi * s**3 / 3), 0.0)

    def scale(self):
        return 1.0 if math.isinf(self.N) else self.N ** (-self.beta)

    def low_frequency_constant(self, grid):
        """max |w0_hat(k) - a| / |k| over nonzero grid wavevectors."""
        k = np.sqrt(grid.k2)
        nz = k > 0
        return float(np.max(np.abs(self.w0_hat(k[nz]) - self.a) / k[nz]))

    def w_hat(self, grid, scale=1.0):
        """Table of w_hat(scale * k); scale = N^-beta gives the w_N multiplier."""
        k = np.sqrt(grid.k2)
        w0 = self.w0_hat(scale * k)
        if self.b == 0:
            return MultiplierTable(grid, w0, "w_hat")
        ext = exterior_multiplier(self.kernel, grid, R=self.R * scale)
        return MultiplierTable(grid, w0 + self.b * ext.values, "w_hat")

    def scaled_multiplier(self, grid):
        """Multiplier of w_N; for N = inf the pointwise k -> 0 limit a + b K_hat."""
        if math.isinf(self.N):
            vals = np.full(grid.shape, self.a)
            if self.b:
                vals = vals + self.b * full_multiplier(self.kernel, grid).values
            return MultiplierTable(grid, vals, "w_inf_hat")
        return self.w_hat(grid, self.scale())


@dataclass(frozen=True, eq=False)
class GPState:
    psi: Field
    t: float = 0.0
    equation: Equation = Equation.LIMITING

    def __post_init__(self):
        if self.psi.space is not Space.POSITION:
            raise UsageError("GP states are stored in position space")

    @property
    def grid(self):
        return self.psi.grid


def _normalized(grid, values):
    values = np.asarray(values, dtype=np.complex128)
    return values / np.sqrt(np.sum(np.abs(values) ** 2) * grid.dx**3)


def gaussian_state(grid, width=1.0, center=(0.0, 0.0, 0.0), momentum=(0.0, 0.0, 0.0),
                   equation=Equation.LIMITING):
    """Normalized Gaussian with |psi|^2 ~ exp(-|x - center|^2 / width^2)."""
    x, y, z = grid.positions()
    cx, cy, cz = center
    r2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
    phase = np.exp(1j * (momentum[0] * x + momentum[1] * y + momentum[2] * z))
    vals = np.exp(-r2 / (2 * width**2)) * phase
    return GPState(Field(grid, _normalized(grid, vals)), 0.0, equation)


def bump_state(grid, radius=4.0, equation=Equation.LIMITING):
    """Normalized smooth compactly supported bump exp(-1 / (1 - r^2/radius^2))."""
    s = np.minimum(grid.r2() / radius**2, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(s < 1, np.exp(-1.0 / (1.0 - s)), 0.0)
    return GPState(Field(grid, _normalized(grid, vals)), 0.0, equation)


def plane_wave_state(grid, mode=(0, 0, 0), equation=Equation.LIMITING):
    """L^{-3/2} exp(i k.x) for the grid wavevector with integer ``mode``."""
    x, y, z = grid.positions()
    k = grid.dk * np.asarray(mode, dtype=float)
    vals = np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)) * grid.L**-1.5
    vals = np.broadcast_to(vals, grid.shape)
    return GPState(Field(grid, vals), 0.0, equation)


class GPIntegrator:
    """Strang splitting for one (grid, potential, equation) triple.

    The interaction multiplier tables are built once and reused; the potential
    evaluated at the end of a step is carried over to the next half step.
    """

    def __init__(self, grid, pot, equation=Equation.LIMITING, dealias=False, gauge=True):
        self.grid = grid
        self.pot = pot
        self.equation = Equation(equation)
        self.gauge = gauge
        self.mask = dealias_mask(grid) if dealias else None
        if self.equation is Equation.SCALED:
            self.multiplier = pot.scaled_multiplier(grid).values
            self.local = 0.0
        else:
            self.local = pot.a
            self.multiplier = (pot.b * full_multiplier(pot.kernel, grid).values) if pot.b else None
        self._cache_dt = None
        self._kinetic = None

    def potential(self, rho):
        """Mean-field potential V for density ``rho`` (real array)."""
        g = self.grid
        if self.mask is not None:
            rho = inverse_array(g, forward_array(g, rho) * self.mask).real
        V = self.local * rho
        if self.multiplier is not None:
            V = V + inverse_array(g, self.multiplier * forward_array(g, rho)).real
        return V

    def mu(self, rho, V=None):
        V = self.potential(rho) if V is None else V
        return 0.5 * float(np.sum(rho * V)) * self.grid.dx**3

    def kinetic_phase(self, dt):
        if self._cache_dt != dt:
            self._kinetic = np.exp(-1j * self.grid.k2 * dt)
            self._cache_dt = dt
        return self._kinetic

    def _half_phase(self, psi, dt, V=None):
        rho = np.abs(psi) ** 2
        V = self.potential(rho) if V is None else V
        shift = self.mu(rho, V) if self.gauge else 0.0
        return np.exp(-0.5j * dt * (V - shift)), V

    def step(self, state, dt):
        new, _ = self._step_values(state.psi.values, dt, None)
        return self._wrap(state, new, state.t + dt, 1)

    def _step_values(self, psi, dt, V_start):
        g = self.grid
        phase, _ = self._half_phase(psi, dt, V_start)
        psi = psi * phase
        psi = inverse_array(g, forward_array(g, psi) * self.kinetic_phase(dt))
        rho = np.abs(psi) ** 2
        V_end = self.potential(rho)
        phase, _ = self._half_phase(psi, dt, V_end)
        return psi * phase, V_end

    def _wrap(self, state, values, t, nstep):
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite field after step {nstep} at t={t:.6g}", step=nstep, t=t)
        return GPState(Field(self.grid, values), t, self.equation)

    def run(self, state, dt, t_final, observe=None, observe_every=1):
        """Integrate to ``t_final`` in steps of (at most) ``dt``.

        ``observe(step, state)`` is called at step 0, every ``observe_every``
        steps and at the final step.
        """
        nsteps = max(1, int(round((t_final - state.t) / dt)))
        h = (t_final - state.t) / nsteps
        psi = state.psi.values
        t0 = state.t
        V = None
        if observe:
            observe(0, state)
        for i in range(1, nsteps + 1):
            psi, V = self._step_values(psi, h, V)
            if not np.all(np.isfinite(psi)):
                raise DivergenceError(
                    f"non-finite field after step {i} at t={t0 + i * h:.6g}", step=i, t=t0 + i * h)
            if observe and (i % observe_every == 0 or i == nsteps):
                observe(i, GPState(Field(self.grid, psi), t0 + i * h, self.equation))
        return GPState(Field(self.grid, psi), t_final, self.equation)

    def energy(self, state):
        g = self.grid
        psi_hat = forward_array(g, state.psi.values)
        kinetic = float(np.sum(g.k2 * np.abs(psi_hat) ** 2)) / g.L**3
        rho = np.abs(state.psi.values) ** 2
        return kinetic + self.mu(rho)

    def chemical_potential(self, state):
        return self.mu(np.abs(state.psi.values) ** 2)


_INTEGRATORS = {}


def _integrator(grid, pot, equation):
    key = (grid, pot, Equation(equation))
    if key not in _INTEGRATORS:
        if len(_INTEGRATORS) > 16:
            _INTEGRATORS.clear()
        _INTEGRATORS[key] = GPIntegrator(grid, pot, equation)
    return _INTEGRATORS[key]


def chemical_potential(state, pot):
    """mu(t) (limiting) or mu_N(t) (scaled): half the interaction energy."""
    return _integrator(state.grid, pot, state.equation).chemical_potential(state)


def energy(state, pot):
    """int |grad psi|^2 + 1/2 int |psi|^2 V*|psi|^2 for the state's equation."""
    return _integrator(state.grid, pot, state.equation).energy(state)


def step_strang(state, pot, dt):
    if not dt > 0:
        raise UsageError("time step must be positive")
    return _integrator(state.grid, pot, state.equation).step(state, dt)


def mass(state):
    return float(np.sum(np.abs(state.psi.values) ** 2) * state.grid.dx**3)


def sobolev_norm(state, order):
    """H^s norm (int (1 + |k|^2)^s |psi_hat|^2 dk / (2 pi)^3)^{1/2}, s in {1,2,3,4}."""
    if order not in (1, 2, 3, 4):
        raise UsageError(f"Sobolev order must be 1..4, got {order!r}")
    g = state.grid
    psi_hat = forward_array(g, state.psi.values)
    return float(np.sqrt(np.sum((1 + g.k2) ** order * np.abs(psi_hat) ** 2) / g.L**3))


class Stability(enum.Enum):
    STABLE_HAT_POSITIVE = "stable_hat_positive"
    STABLE_A_VS_K = "stable_a_vs_K"
    CONDITIONAL = "conditional"


@dataclass(frozen=True)
class StabilityReport:
    classification: Stability
    min_w_hat: float
    a_plus_b_min_K: float


def stability_predicate(pot, grid):
    """Classify the global-existence regime.

    ``w_hat >= 0`` on the grid gives :attr:`Stability.STABLE_HAT_POSITIVE`;
    otherwise ``a + b * inf K_hat >= 0`` (inf K_hat_dip = -4 pi / 3) gives
    :attr:`Stability.STABLE_A_VS_K`; anything else is conditional on small data.
    """
    w = pot.w_hat(grid).values
    min_w = float(w.min())
    if pot.kernel.is_dipolar:
        inf_K = DIPOLAR_INF
    else:
        inf_K = float(full_multiplier(pot.kernel, grid).values.min())
    margin = pot.a + pot.b * inf_K
    if min_w >= 0:
        cls = Stability.STABLE_HAT_POSITIVE
    elif margin >= 0:
        cls = Stability.STABLE_A_VS_K
    else:
        cls = Stability.CONDITIONAL
    return StabilityReport(cls, min_w, margin)


def default_dt(grid):
    return 0.1 * grid.dx**2


DIAGNOSTIC_COLUMNS = ("t", "mass", "energy", "H1", "H2", "H3", "H4", "mu")


def diagnostics_row(integ, state):
    return (state.t, mass(state), integ.energy(state),
            *(sobolev_norm(state, s) for s in (1, 2, 3, 4)),
            integ.chemical_potential(state))


def run_with_diagnostics(integ, state, dt, t_final, csv_path, every=1,
                         snapshot_dir=None, snapshot_stride=0):
    """Integrate, appending diagnostics rows to ``csv_path`` as the run proceeds.

    Rows written before a divergence stay on disk.
    """
    csv_path = Path(csv_path)
    rows = []
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTIC_COLUMNS)

        def observe(step, st):
            row = diagnostics_row(integ, st)
            rows.append(row)
            writer.writerow([repr(float(v)) for v in row])
            fh.flush()
            if snapshot_dir is not None and snapshot_stride and step % snapshot_stride == 0:
                write_field(Path(snapshot_dir) / f"psi_{step:07d}.bin", st.psi)

        final = integ.run(state, dt, t_final, observe=observe,
                          observe_every=every if not snapshot_stride else math.gcd(every, snapshot_stride))
    return final, rows
