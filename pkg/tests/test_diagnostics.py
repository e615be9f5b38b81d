import math

import numpy as np
import pytest

from pulse_critic.diagnostics import (
    DecayFit, blowup_predicate, convergence_order, delta_scaling, energy, fit_decay, loglog_slope,
    outcome_fits, sup_norms,
)
from pulse_critic.errors import FitDomainError, MixedSweepError, NotSmoothError
from pulse_critic.profiles import (
    DataParams, bump_profile, build_initial_data, check_outgoing_constraint, solve_phi1,
)
from pulse_critic.solver import RunOutcome, SolverConfig, evolve
from pulse_critic.state import FieldState, RadialGrid

import oracles


def _series(alpha=1.0, C=3.0, t=None):
    t = np.linspace(1.0, 50.0, 400) if t is None else t
    return [{"t": float(x), "dphi": C * x**-alpha, "Lphit": C * x ** (-2 * alpha)} for x in t]


def test_fit_decay_recovers_exact_power_law():
    fit = fit_decay(_series(), "dphi", window=(5.0, 50.0))
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.as_dict()["alpha"] == fit.exponent


def test_fit_decay_default_window_is_last_three_quarters():
    series = _series(alpha=2.0)
    fit = fit_decay(series, "dphi")
    assert fit.window == (12.5, 50.0)
    assert fit.samples == sum(1 for row in series if row["t"] >= 12.5)
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)


def test_fit_decay_accepts_column_dict():
    t = np.linspace(2.0, 40.0, 100)
    fit = fit_decay({"t": t, "dphi": 0.5 * t**-1.5}, "dphi", window=(2.0, 40.0))
    assert isinstance(fit, DecayFit)
    assert fit.exponent == pytest.approx(1.5, abs=1e-12)


def test_fit_decay_rejects_nonpositive_values_and_thin_windows():
    series = _series()
    series[-1]["dphi"] = 0.0
    with pytest.raises(FitDomainError):
        fit_decay(series, "dphi")
    with pytest.raises(ValueError):
        fit_decay(_series(), "dphi", window=(49.9, 50.0))


def test_outcome_fits_reports_errors_per_quantity():
    fits = outcome_fits(_series(), SolverConfig(t_max=50.0))
    assert fits["dphi"]["alpha"] == pytest.approx(1.0, abs=1e-12)
    assert fits["Lphit"]["alpha"] == pytest.approx(2.0, abs=1e-12)
    assert "error" in fits["phit"]


def _runs(exponent=0.5, amp=2.0, deltas=(0.1, 0.05, 0.025)):
    return [(d, {"C": amp * d**exponent, "p": 3, "eps0": 0.5, "profile": "bump"}) for d in deltas]


def test_delta_scaling_recovers_exponent():
    fit = delta_scaling(_runs())
    assert fit.exponent == pytest.approx(0.5, abs=1e-12)
    assert fit.amplitude == pytest.approx(2.0, rel=1e-12)
    assert fit.residual < 1e-12
    assert [d for d, _ in fit.samples] == [0.025, 0.05, 0.1]


def test_delta_scaling_is_invariant_under_rescaling():
    a = delta_scaling(_runs(1.5, 1.0)).exponent
    b = delta_scaling(_runs(1.5, 1e-6)).exponent
    assert a == pytest.approx(b, abs=1e-12)


def test_delta_scaling_rejects_mixed_or_degenerate_sweeps():
    runs = _runs()
    runs[1][1]["p"] = 5
    with pytest.raises(MixedSweepError):
        delta_scaling(runs)
    with pytest.raises(MixedSweepError):
        delta_scaling(_runs(deltas=(0.1, 0.1, 0.05)))
    with pytest.raises(ValueError):
        delta_scaling(_runs()[:2])
    bad = _runs()
    bad[0][1]["C"] = 0.0
    with pytest.raises(FitDomainError):
        delta_scaling(bad)


def test_loglog_slope_of_exact_power():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, amp, resid = loglog_slope(x, 7.0 * x**-0.75)
    assert slope == pytest.approx(-0.75, abs=1e-13) and amp == pytest.approx(7.0, rel=1e-13)
    assert resid < 1e-13


def _pulse_state(delta=0.1, cells=64, amplitude=1.0):
    params = DataParams(delta, 0.5, 3)
    prof = solve_phi1(bump_profile(amplitude=amplitude), params)
    grid = RadialGrid(1.5, int(round(1.5 * cells / delta)))
    return build_initial_data(prof, params, grid), prof, params


def test_sup_norms_and_energy_of_zero_data():
    g = RadialGrid(2.0, 100)
    st = FieldState(1.0, g, np.zeros(101), np.zeros(101), 3)
    assert all(v == 0.0 for v in sup_norms(st).values())
    assert energy(st) == 0.0


def test_initial_sup_norms_follow_data_scales():
    delta = 0.1
    st, prof, params = _pulse_state(delta)
    norms = sup_norms(st)
    s = (st.r - 1.0) / delta
    inside = (s > -1) & (s < 0)
    assert norms["phit"] / delta**0.5 == pytest.approx(np.max(np.abs(prof.phi1(s[inside]))), rel=1e-14)
    assert norms["phi"] / delta**1.5 == pytest.approx(np.max(prof.phi0(s[inside])), rel=1e-14)
    assert norms["Lphi"] == pytest.approx(check_outgoing_constraint(st, params)["res1"] * delta**1.5, rel=1e-12)


def test_energy_of_a_quadratic_matches_trapezoid_of_closed_form():
    g = RadialGrid(1.0, 200)
    r = g.r
    st = FieldState(1.0, g, r**2, np.zeros_like(r), 3)
    # density (2r)^2 r^2, integral of 4 r^4 on [0, 1] is 4/5
    assert energy(st) == pytest.approx(0.8, rel=1e-4)


def _linear_state(n, r_max=3.2):
    _, data = oracles.spherical_gaussian(1e-6, 7e-6, 1.0, 0.1)
    g = RadialGrid(r_max, n)
    phi, phit = data(g.r)
    return FieldState(1.0, g, phi, phit, 3)


def test_convergence_order_of_linear_evolution_is_four():
    states = [evolve(_linear_state(n), 1.5) for n in (400, 800, 1600)]
    order = convergence_order(*states, probe_t=1.5)
    assert order == pytest.approx(4.0, abs=0.3)


def test_convergence_order_needs_nested_grids_at_probe_time():
    a, b = _linear_state(100), _linear_state(200)
    with pytest.raises(ValueError):
        convergence_order(a, b, _linear_state(300), probe_t=1.0)
    with pytest.raises(NotSmoothError):
        convergence_order(a, b, _linear_state(400), probe_t=1.5)
    zeros = [FieldState(1.0, RadialGrid(1.0, n), np.zeros(n + 1), np.zeros(n + 1), 3) for n in (50, 100, 200)]
    with pytest.raises(NotSmoothError):
        convergence_order(*zeros, probe_t=1.0)


def test_convergence_order_refuses_runs_that_hit_a_guard():
    st = _linear_state(100)
    out = RunOutcome("Inconclusive", "grad_cap", 1.2, signals={"grad_cap": 1.1}, final_state=st)
    with pytest.raises(NotSmoothError):
        convergence_order(out, out, out, probe_t=1.5)


def test_blowup_predicate_subcritical_p1():
    params = DataParams(0.1, 0.5, 1)
    pred = blowup_predicate(solve_phi1(bump_profile(amplitude=0.5), params), params)
    assert pred["regime"] == "sub-critical" and pred["threshold"] == 2.0
    assert pred["satisfied"] is True and pred["lhs_max"] > 2.0


def test_blowup_predicate_critical_threshold_for_p2():
    params = DataParams(0.1, 0.5, 2)
    pred = blowup_predicate(solve_phi1(bump_profile(amplitude=0.1), params), params)
    assert pred["regime"] == "critical"
    # (p-1) 2^p / (p (2^(p-1) - 1)) at p = 2
    assert pred["threshold"] == pytest.approx(2.0, abs=1e-15)
    assert pred["satisfied"] is False


def test_blowup_predicate_zero_velocity_and_supercritical():
    params = DataParams(0.1, 0.5, 1)
    pred = blowup_predicate(solve_phi1(bump_profile(amplitude=0.0), params), params)
    assert pred["lhs_max"] == 0.0 and pred["satisfied"] is False
    params3 = DataParams(0.1, 0.5, 3)
    pred3 = blowup_predicate(solve_phi1(bump_profile(), params3), params3)
    assert pred3["regime"] == "super-critical" and pred3["satisfied"] is None
    assert math.isfinite(pred3["lhs_max"])
