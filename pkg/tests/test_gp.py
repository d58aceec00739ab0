import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dipolar_lab.errors import DivergenceError, UsageError, ValidationError
from dipolar_lab.gp import (
    DIAGNOSTIC_COLUMNS,
    Equation,
    GPIntegrator,
    GPState,
    PotentialSpec,
    Stability,
    bump_state,
    chemical_potential,
    energy,
    gaussian_state,
    mass,
    plane_wave_state,
    run_with_diagnostics,
    sobolev_norm,
    stability_predicate,
    step_strang,
)
from dipolar_lab.spectral import Field, Grid3, inverse_array, read_field

GRID = Grid3(48, 16.0)


def gauss_quartic(w):
    return (2 * np.pi * w**2) ** -1.5


# --- potential ---------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(b=-0.1), dict(R=0.0), dict(beta=0.0), dict(N=1.0),
                                    dict(w0_kind="cube"), dict(w0_width=0.0)])
def test_potential_rejects_bad_parameters(kwargs):
    with pytest.raises(ValidationError):
        PotentialSpec(**kwargs)


@pytest.mark.parametrize("kind", ["gaussian", "ball"])
def test_w0_integrates_to_a(kind):
    pot = PotentialSpec(a=2.5, w0_kind=kind, w0_width=0.7)
    assert float(pot.w0_hat(np.array(0.0))) == pytest.approx(2.5)
    integral, _ = integrate.quad(lambda r: 4 * np.pi * r**2 * pot.w0_real(r), 0, 10, points=[0.7])
    assert integral == pytest.approx(2.5, rel=1e-8)


def test_scaled_multiplier_matches_real_space():
    grid = Grid3(64, 6.4)
    pot = PotentialSpec(a=1.0, b=0.0, N=16, beta=0.25, w0_width=0.5)
    real = inverse_array(grid, pot.scaled_multiplier(grid).values).real
    s = pot.N ** pot.beta
    expect = s**3 * pot.w0_real(s * np.sqrt(grid.r2()))
    assert np.max(np.abs(real - expect)) < 1e-8 * expect.max()


def test_infinite_N_multiplier_is_a_plus_bK(small_grid):
    pot = PotentialSpec(a=1.0, b=0.3, N=math.inf)
    table = pot.scaled_multiplier(small_grid).values
    assert table[0, 0, 0] == pytest.approx(1.0)
    assert table.max() == pytest.approx(1 + 0.3 * 8 * np.pi / 3, abs=1e-12)


def test_multiplier_defect_decays_with_N(small_grid):
    base = PotentialSpec(a=1.0, b=0.5, R=0.25, w0_width=0.25, beta=0.5)
    limit = base.with_N(math.inf).scaled_multiplier(small_grid).values
    defects = [np.max(np.abs(base.with_N(N).scaled_multiplier(small_grid).values - limit))
               for N in (16, 64, 256)]
    for d0, d1 in zip(defects, defects[1:]):
        assert d1 <= d0 * 4 ** -0.5 * 1.01


# --- chemical potential and energy ----------------------------------------------

def test_limiting_mu_and_energy_gaussian():
    pot = PotentialSpec(a=3.0, b=0.0)
    state = gaussian_state(GRID, width=1.0)
    mu = chemical_potential(state, pot)
    assert mu == pytest.approx(0.5 * 3.0 * gauss_quartic(1.0), rel=1e-10)
    assert energy(state, pot) == pytest.approx(1.5 + mu, rel=1e-10)


def test_scaled_mu_gaussian_convolution():
    pot = PotentialSpec(a=2.0, b=0.0, N=81, beta=0.25, w0_width=0.6)
    state = gaussian_state(GRID, width=1.2, equation=Equation.SCALED)
    s_N = 0.6 * 81**-0.25
    var = 1.2**2 + s_N**2
    assert chemical_potential(state, pot) == pytest.approx(0.5 * 2.0 * (2 * np.pi * var) ** -1.5, rel=1e-9)


def test_dipolar_mu_vanishes_for_uniform_density(small_grid):
    pot = PotentialSpec(a=0.0, b=1.0)
    state = plane_wave_state(small_grid, (1, 0, 2))
    assert abs(chemical_potential(state, pot)) < 1e-14


def test_dipolar_mu_sign_for_elongated_cloud():
    # a cigar along the dipole axis lowers the dipolar energy
    grid = Grid3(32, 16.0)
    x, y, z = grid.positions()
    psi = np.exp(-(x**2 + y**2) / 2 - z**2 / 8) + 0j
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx**3)
    pot = PotentialSpec(a=0.0, b=1.0)
    assert chemical_potential(GPState(Field(grid, psi)), pot) < 0


# --- Sobolev norms -------------------------------------------------------------------

def test_sobolev_norms_gaussian():
    w = 1.0
    state = gaussian_state(GRID, width=w)
    v = 1 / (2 * w**2)
    assert sobolev_norm(state, 1) ** 2 == pytest.approx(1 + 3 * v, rel=1e-10)
    assert sobolev_norm(state, 2) ** 2 == pytest.approx(1 + 6 * v + 15 * v**2, rel=1e-10)


def test_sobolev_plane_wave(small_grid):
    state = plane_wave_state(small_grid, (2, -1, 0))
    k2 = 5 * small_grid.dk**2
    for s in (1, 2, 3, 4):
        assert sobolev_norm(state, s) == pytest.approx((1 + k2) ** (s / 2), rel=1e-12)


def test_sobolev_rejects_bad_order(small_grid):
    with pytest.raises(UsageError):
        sobolev_norm(plane_wave_state(small_grid), 5)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.6, 2.0))
def test_sobolev_norms_increase_with_order(w):
    state = gaussian_state(GRID, width=w)
    norms = [sobolev_norm(state, s) for s in (1, 2, 3, 4)]
    assert all(a < b for a, b in zip(norms, norms[1:]))
    assert mass(state) == pytest.approx(1.0, rel=1e-12)


# --- Strang step -------------------------------------------------------------------------

def test_plane_wave_phase(small_grid):
    pot = PotentialSpec(a=2.0, b=0.7)
    state = plane_wave_state(small_grid, (1, 2, 0))
    dt = 0.01
    out = step_strang(state, pot, dt)
    k2 = 5 * small_grid.dk**2
    phase = np.exp(-1j * (k2 + 0.5 * 2.0 / small_grid.L**3) * dt)
    assert np.max(np.abs(out.psi.values - phase * state.psi.values)) < 1e-14
    assert out.t == pytest.approx(dt)


def test_step_rejects_nonpositive_dt(small_grid):
    with pytest.raises(UsageError):
        step_strang(plane_wave_state(small_grid), PotentialSpec(), 0.0)


def test_strang_second_order(small_grid):
    pot = PotentialSpec(a=5.0, b=0.3)
    integ = GPIntegrator(small_grid, pot)
    state = gaussian_state(small_grid, width=1.5, momentum=(0.3, 0, 0.2))
    runs = [integ.run(state, dt, 0.2).psi.values for dt in (0.02, 0.01, 0.005)]
    d1 = np.linalg.norm(runs[0] - runs[1])
    d2 = np.linalg.norm(runs[1] - runs[2])
    assert 3.3 <= d1 / d2 <= 4.7


def test_mass_conserved_and_h1_bounded(small_grid):
    pot = PotentialSpec(a=1.0, b=0.2)
    integ = GPIntegrator(small_grid, pot)
    state = gaussian_state(small_grid, width=1.2)
    e0 = integ.energy(state)
    h0 = sobolev_norm(state, 1)
    out = integ.run(state, 0.01, 0.5)
    assert mass(out) == pytest.approx(1.0, abs=1e-12)
    assert integ.energy(out) == pytest.approx(e0, rel=1e-3)
    assert sobolev_norm(out, 1) < 2 * h0


def test_gauge_changes_only_global_phase(small_grid):
    pot = PotentialSpec(a=3.0, b=0.4)
    state = gaussian_state(small_grid, width=1.3)
    a = GPIntegrator(small_grid, pot, gauge=True).run(state, 0.01, 0.3).psi.values
    b = GPIntegrator(small_grid, pot, gauge=False).run(state, 0.01, 0.3).psi.values
    assert np.allclose(np.abs(a), np.abs(b), atol=1e-12)
    i = np.argmax(np.abs(a))
    phase = a.flat[i] / b.flat[i]
    assert abs(abs(phase) - 1) < 1e-12
    assert np.allclose(a, phase * b, atol=1e-12)


def test_run_matches_repeated_steps(small_grid):
    pot = PotentialSpec(a=2.0, b=0.1)
    state = bump_state(small_grid, radius=4.0)
    out = state
    for _ in range(5):
        out = step_strang(out, pot, 0.01)
    integ = GPIntegrator(small_grid, pot)
    assert np.allclose(integ.run(state, 0.01, 0.05).psi.values, out.psi.values, atol=1e-13)


def test_dealias_keeps_low_mode_states(small_grid):
    pot = PotentialSpec(a=1.0, b=0.2)
    state = gaussian_state(small_grid, width=1.5)
    a = GPIntegrator(small_grid, pot, dealias=True).run(state, 0.01, 0.1).psi.values
    b = GPIntegrator(small_grid, pot).run(state, 0.01, 0.1).psi.values
    assert np.max(np.abs(a - b)) < 1e-4


def test_nan_field_raises_divergence(small_grid):
    vals = gaussian_state(small_grid).psi.values.copy()
    vals[0, 0, 0] = np.nan
    state = GPState(Field(small_grid, vals))
    with pytest.raises(DivergenceError) as exc:
        GPIntegrator(small_grid, PotentialSpec()).run(state, 0.01, 0.05)
    assert exc.value.step == 1


# --- stability -----------------------------------------------------------------------------

def test_stability_classes(small_grid):
    assert stability_predicate(PotentialSpec(a=1.0, b=0.0), small_grid).classification \
        is Stability.STABLE_HAT_POSITIVE
    rep = stability_predicate(PotentialSpec(a=1.0, b=0.2, w0_width=1.0), small_grid)
    assert rep.min_w_hat < 0
    assert rep.classification is Stability.STABLE_A_VS_K
    assert rep.a_plus_b_min_K == pytest.approx(1 - 0.2 * 4 * np.pi / 3)
    assert stability_predicate(PotentialSpec(a=1.0, b=0.5, w0_width=1.0), small_grid).classification \
        is Stability.CONDITIONAL


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 1.0))
def test_stability_margin_formula(a, b):
    rep = stability_predicate(PotentialSpec(a=a, b=b), Grid3(8, 8.0))
    assert rep.a_plus_b_min_K == pytest.approx(a - b * 4 * np.pi / 3)
    if rep.classification is Stability.CONDITIONAL:
        assert rep.min_w_hat < 0 and rep.a_plus_b_min_K < 0


# --- diagnostics --------------------------------------------------------------------------

def test_diagnostics_csv_and_snapshots(small_grid, tmp_path):
    pot = PotentialSpec(a=1.0, b=0.1)
    integ = GPIntegrator(small_grid, pot)
    state = gaussian_state(small_grid, width=1.2)
    final, rows = run_with_diagnostics(integ, state, 0.01, 0.1, tmp_path / "d.csv", every=5,
                                       snapshot_dir=tmp_path, snapshot_stride=5)
    with open(tmp_path / "d.csv") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == DIAGNOSTIC_COLUMNS
    assert [float(r[0]) for r in table[1:]] == pytest.approx([0.0, 0.05, 0.1])
    assert len(rows) == 3
    snap = read_field(tmp_path / "psi_0000010.bin")
    assert np.array_equal(snap.values, final.psi.values)
