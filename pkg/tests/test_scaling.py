import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dipolar_lab import scaling
from dipolar_lab.errors import DivergenceError, InconclusiveFitError, UsageError
from dipolar_lab.gp import GPState, PotentialSpec, gaussian_state
from dipolar_lab.scaling import SWEEP_COLUMNS, SweepPlan, fit_rate, run_sweep, write_summary
from dipolar_lab.spectral import Field, Grid3

GRID = Grid3(16, 12.0)


def plan(**kw):
    base = dict(beta=0.25, Ns=(8, 32, 128), t_final=0.1, initial=gaussian_state(GRID, width=1.2),
                pot=PotentialSpec(a=1.0, b=0.2, R=0.25, w0_width=0.25), dt=0.01)
    base.update(kw)
    return SweepPlan(**base)


# --- rate fits ----------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.floats(-3.0, -0.05), st.floats(-5.0, 5.0))
def test_fit_recovers_exact_power_law(slope, logc):
    Ns = np.array([8, 16, 32, 64, 128])
    fit = fit_rate(Ns, np.exp(logc) * Ns**slope)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(logc, abs=1e-8)
    assert fit.residual < 1e-9
    assert fit.within(slope, 1e-6)


def test_fit_residual_reports_scatter():
    Ns = np.array([8, 16, 32, 64])
    errs = Ns**-0.5 * np.array([1.0, 1.3, 0.8, 1.1])
    assert fit_rate(Ns, errs).residual > 0.05


def test_fit_needs_three_points():
    with pytest.raises(InconclusiveFitError):
        fit_rate([8, 16], [1e-2, 5e-3])


def test_fit_rejects_floor_errors():
    with pytest.raises(InconclusiveFitError):
        fit_rate([8, 16, 32], [1e-3, 1e-13, 1e-14])


def test_fit_rejects_mismatched_lengths():
    with pytest.raises(UsageError):
        fit_rate([8, 16, 32], [1e-3, 1e-4])


def test_fit_to_dict_is_json():
    fit = fit_rate([8, 16, 32], [1e-2, 5e-3, 2.5e-3])
    d = json.loads(json.dumps(fit.to_dict()))
    assert d["slope"] == pytest.approx(-1.0)


# --- plans -----------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(Ns=(8,)), dict(Ns=(16, 8, 32)), dict(Ns=(8, 8, 16)),
                                dict(t_final=0.0), dict(dt=-1.0)])
def test_plan_validation(kw):
    with pytest.raises(UsageError):
        plan(**kw)


def test_plan_overrides_beta():
    p = plan(beta=0.4)
    assert p.pot.beta == 0.4
    assert p.describe()["beta"] == 0.4
    assert p.describe()["grid"] == {"n": 16, "L": 12.0}


# --- sweeps -------------------------------------------------------------------------------

def test_infinite_N_reproduces_limit():
    res = run_sweep(plan(Ns=(8, math.inf)))
    assert res.rows[-1].error_l2 < 1e-9
    assert res.rows[0].error_l2 > 1e-6


def test_errors_decrease_with_N():
    res = run_sweep(plan(Ns=(8, 32, 128, 512)))
    errs = res.errors
    assert all(b < a for a, b in zip(errs, errs[1:]))
    for r in res.rows:
        assert r.mass_drift < 1e-12
        assert r.error_density_l1 <= 2 * r.error_l2 + 1e-15


def test_errors_decrease_without_dipolar_part():
    res = run_sweep(plan(pot=PotentialSpec(a=1.0, b=0.0, w0_width=0.25)))
    assert all(b < a for a, b in zip(res.errors, res.errors[1:]))


def test_longer_time_does_not_shrink_error():
    short = run_sweep(plan(Ns=(8, 32, 128))).errors
    long_ = run_sweep(plan(Ns=(8, 32, 128), t_final=0.2)).errors
    assert all(b >= 0.9 * a for a, b in zip(short, long_))


def test_global_phase_of_initial_data_is_irrelevant():
    base = plan()
    rotated = GPState(Field(GRID, np.exp(0.7j) * base.initial.psi.values))
    a = run_sweep(base).errors
    b = run_sweep(plan(initial=rotated)).errors
    assert np.allclose(a, b, rtol=1e-10, atol=1e-15)


def test_parallel_sweep_matches_serial():
    a = run_sweep(plan()).errors
    b = run_sweep(plan(workers=2)).errors
    assert a == b


def test_divergence_carries_N(monkeypatch):
    real = scaling.GPIntegrator.run

    def boom(self, state, dt, t_final, **kw):
        if self.pot.N == 32:
            raise DivergenceError("non-finite field", step=3, t=0.03)
        return real(self, state, dt, t_final, **kw)

    monkeypatch.setattr(scaling.GPIntegrator, "run", boom)
    with pytest.raises(DivergenceError) as exc:
        run_sweep(plan())
    assert exc.value.N == 32
    assert exc.value.step == 3


def test_csv_and_summary(tmp_path):
    p = plan(Ns=(8, 32, math.inf))
    res = run_sweep(p)
    res.write_csv(tmp_path / "sweep.csv")
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert [r[0] for r in rows[1:]] == ["8", "32", "inf"]
    fit = fit_rate(res.Ns[:2] + [128], res.errors[:2] + [res.errors[1] / 2])
    write_summary(tmp_path / "s.json", p, fit, {"note": 1})
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["plan"]["Ns"] == [8, 32, math.inf]
    assert data["note"] == 1
