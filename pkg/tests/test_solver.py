import numpy as np
import pytest

from pulse_critic import solver
from pulse_critic.errors import HyperbolicityLoss, NumericalBreakdown, ResolutionError
from pulse_critic.profiles import DataParams, bump_profile, build_initial_data, solve_phi1
from pulse_critic.solver import BLOWUP, GLOBAL, INCONCLUSIVE, SolverConfig, classify, run
from pulse_critic.state import FieldState, RadialGrid, d1, d2, laplacian, pad

import oracles

EPS = np.finfo(float).eps


def _state(grid, phi, phit, p=3, t=1.0, **meta):
    return FieldState(t, grid, np.asarray(phi, float), np.asarray(phit, float), p, meta)


# stencils --------------------------------------------------------------------------


@pytest.mark.parametrize("order", [2, 4])
def test_parity_ghosts_are_even(order):
    f = np.arange(10.0) ** 2 + 1.0
    fp = pad(f, order // 2, order)
    g = order // 2
    for k in range(1, g + 1):
        assert fp[g - k] == f[k]


@pytest.mark.parametrize("order", [2, 4])
def test_outer_extrapolation_exact_for_polynomials(order):
    x = np.arange(12.0)
    f = 0.5 + x - 0.1 * x**2 + (0.01 * x**4 if order == 4 else 0.0)
    fp = pad(f, order // 2, order)
    xg = np.arange(12, 12 + order // 2, dtype=float)
    fg = 0.5 + xg - 0.1 * xg**2 + (0.01 * xg**4 if order == 4 else 0.0)
    np.testing.assert_allclose(fp[-(order // 2):], fg, rtol=1e-12)


@pytest.mark.parametrize("order", [2, 4])
def test_laplacian_of_r_squared_is_six(order):
    g = RadialGrid(2.0, 200, order)
    lap = laplacian(g.r**2, g)
    assert np.max(np.abs(lap - 6.0)) <= 1e-10


@pytest.mark.parametrize("order", [2, 4])
def test_derivative_stencils_converge_at_their_order(order):
    errs = []
    for n in (200, 400, 800):
        g = RadialGrid(3.0, n, order)
        f = np.exp(-((g.r - 1.5) / 0.3) ** 2)
        exact = -2 * (g.r - 1.5) / 0.09 * f
        errs.append(np.max(np.abs(d1(f, g.h, order) - exact)))
    assert np.log2(errs[1] / errs[2]) == pytest.approx(order, abs=0.2)
    g = RadialGrid(3.0, 800, order)
    f = np.cos(g.r)
    inner = slice(0, -order)  # the extrapolated outer ghosts are exact only for polynomials
    assert np.max(np.abs(d2(f, g.h, order) + np.cos(g.r))[inner]) < 1e-4


def test_grid_for_run_outruns_the_pulse_and_resolves_it():
    for delta, t_max in [(0.05, 50.0), (0.1, 2.0), (0.0125, 5.0)]:
        g = RadialGrid.for_run(delta, t_max)
        assert g.r_max >= 1 + 1.05 * t_max
        assert g.cells_per(delta) >= 32
        assert g.h == pytest.approx(g.r_max / g.n)
    with pytest.raises(ResolutionError):
        RadialGrid(2.0, 100).require_resolution(0.05)


# rhs / step ------------------------------------------------------------------------


def test_rhs_of_zero_state_is_zero():
    g = RadialGrid(2.0, 200)
    st = _state(g, np.zeros(g.n + 1), np.zeros(g.n + 1))
    a, b = solver.rhs(st)
    assert not a.any() and not b.any()
    new = solver.step(st, 0.004)
    assert not new.phi.any() and not new.phit.any() and new.t == pytest.approx(1.004)


@pytest.mark.parametrize("order", [2, 4])
def test_rhs_quadratic_exactness(order):
    g = RadialGrid(2.0, 100, order)  # rounding in the 1/h^2 stencil stays ~1e-12
    st = _state(g, g.r**2, np.zeros(g.n + 1))
    dphi, dphit = solver.rhs(st)
    assert not dphi.any()
    assert np.max(np.abs(dphit - 6.0)) <= 1e-10


def test_single_step_on_quadratic():
    """With phit = 0 and c = 1 the system is phi_tt = 6: RK4 is exact."""
    g = RadialGrid(2.0, 400)
    st = _state(g, g.r**2, np.zeros(g.n + 1), p=40)  # phit^40 stays far below round-off
    dt = 0.002
    new = solver.step(st, dt)
    np.testing.assert_allclose(new.phit, 6.0 * dt, rtol=0, atol=1e-10)
    np.testing.assert_allclose(new.phi, g.r**2 + 3.0 * dt**2, rtol=0, atol=1e-10)


def test_hyperbolicity_loss_is_raised_with_location():
    g = RadialGrid(2.0, 200)
    phit = np.zeros(g.n + 1)
    phit[100] = -0.95  # p = 1: 1 + phit = 0.05 < 0.1
    st = _state(g, np.zeros(g.n + 1), phit, p=1)
    with pytest.raises(HyperbolicityLoss) as exc:
        solver.rhs(st)
    assert exc.value.r == pytest.approx(g.r[100])
    with pytest.raises(HyperbolicityLoss):
        solver.step(st, 1e-4)


def test_non_finite_values_raise_numerical_breakdown():
    g = RadialGrid(2.0, 200)
    phi = np.zeros(g.n + 1)
    phi[50] = np.inf
    st = _state(g, phi, np.zeros(g.n + 1))
    with pytest.raises(NumericalBreakdown):
        solver.step(st, 1e-4)
    phit = np.zeros(g.n + 1)
    phit[50] = np.nan
    with pytest.raises(NumericalBreakdown):
        solver.step(_state(g, np.zeros(g.n + 1), phit), 1e-4)


def test_cfl_bound_enforced_on_request():
    g = RadialGrid(2.0, 200)
    st = _state(g, np.zeros(g.n + 1), np.zeros(g.n + 1))
    dt = solver.max_dt(st, 0.4)
    assert dt == pytest.approx(0.4 * g.h)
    with pytest.raises(ValueError):
        solver.step(st, 1.5 * dt, cfl=0.4)


@pytest.mark.parametrize("bad", [dict(cfl=0.0), dict(cfl=0.95), dict(order=3), dict(blowup_grad_cap=0.0),
                                 dict(hyp_floor=1.0), dict(t_max=1.0), dict(grad_cap_cells=-1.0)])
def test_solver_config_invariants(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_fused_step_matches_reference_rk4():
    """The fused kernel against a plain numpy RK4 built on ``state.laplacian``."""
    params = DataParams(0.1, 0.5, 3)
    prof = solve_phi1(bump_profile(amplitude=0.7), params)
    for order in (2, 4):
        g = RadialGrid(2.0, 1280, order)
        st = build_initial_data(prof, params, g)
        dt = solver.max_dt(st, 0.4)

        def f(phi, phit):
            return phit, laplacian(phi, g) / (1.0 + phit**3)

        k1 = f(st.phi, st.phit)
        k2 = f(st.phi + dt / 2 * k1[0], st.phit + dt / 2 * k1[1])
        k3 = f(st.phi + dt / 2 * k2[0], st.phit + dt / 2 * k2[1])
        k4 = f(st.phi + dt * k3[0], st.phit + dt * k3[1])
        ref_phi = st.phi + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        ref_phit = st.phit + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        new = solver.step(st, dt)
        assert np.max(np.abs(new.phi - ref_phi)) <= 1e-14 * np.max(np.abs(ref_phi))
        assert np.max(np.abs(new.phit - ref_phit)) <= 1e-13 * np.max(np.abs(ref_phit))


def test_reversibility_on_a_smooth_field():
    """10 steps forward then 10 with -dt.  The time-asymmetry of RK4 is
    O((omega dt)^6), negligible for a wide pulse at small Courant number, so what remains
    is rounding amplified by the discrete operator: condition factor
    kappa = steps * dt * ||c^2 Laplacian_h||_inf."""
    g = RadialGrid(4.0, 4000)
    r = g.r
    phi = 0.1 * np.exp(-(((r - 2.0) / 0.25) ** 2))
    st = _state(g, phi, 0.5 * phi)
    dt = solver.max_dt(st, 0.1)
    cur = st
    for _ in range(10):
        cur = solver.step(cur, dt)
    for _ in range(10):
        cur = solver.step(cur, -dt)
    cmax = np.max((1 + cur.phit**3) ** -0.5)
    kappa = 20 * dt * cmax**2 * (64.0 / 12.0) / g.h**2
    scale = max(np.max(np.abs(st.phi)), np.max(np.abs(st.phit)))
    err = max(np.max(np.abs(cur.phi - st.phi)), np.max(np.abs(cur.phit - st.phit)))
    assert err <= 10 * EPS * kappa * scale
    assert abs(cur.t - 1.0) < 1e-14


def _pulse(delta=0.1, amplitude=0.5, p=3, eps0=0.5, cells=64, t_max=2.0):
    params = DataParams(delta, eps0, p)
    prof = solve_phi1(bump_profile(amplitude=amplitude), params)
    g = RadialGrid.for_run(delta, t_max, cells_per_delta=cells)
    return build_initial_data(prof, params, g)


def test_finite_propagation():
    """Dispersive precursors of the discrete scheme fall below 1e-12 once the pulse is
    resolved (measured ahead of the cone: 6e-5, 3e-8, 1e-13 at 32, 64, 128 cells)."""
    st = _pulse(delta=0.1, amplitude=0.8, cells=128, t_max=2.0)
    delta = 0.1
    cmax = 1.0
    cur = st
    while cur.t < 2.0 - 1e-12:
        cmax = max(cmax, float(np.max(cur.c)))
        cur = solver.step(cur, min(solver.max_dt(cur, 0.4), 2.0 - cur.t))
        cmax = max(cmax, float(np.max(cur.c)))
        lo = 1 - delta - (cur.t - 1) * cmax
        hi = 1 + (cur.t - 1) * cmax
        outside = (cur.r < lo) | (cur.r > hi)
        assert np.max(np.abs(cur.phi[outside]), initial=0.0) < 1e-12
        assert np.max(np.abs(cur.phit[outside]), initial=0.0) < 1e-12


def test_linear_regime_matches_spherical_means():
    exact, _ = oracles.spherical_gaussian(1e-6, 7e-6, 1.0, 0.1)
    g = RadialGrid(3.2, 4800)
    r = g.r
    phi0 = 1e-6 * np.exp(-(((r - 1.0) / 0.1) ** 2))
    st = _state(g, phi0, 7.0 * phi0)
    out = solver.evolve(st, 2.0)
    ref = exact(2.0, r[1:])
    assert np.max(np.abs(out.phi[1:] - ref)) / np.max(np.abs(ref)) < 1e-4


def test_linear_energy_is_conserved():
    from pulse_critic.diagnostics import energy
    g = RadialGrid(3.2, 2400)
    r = g.r
    phi0 = 1e-6 * np.exp(-(((r - 1.0) / 0.1) ** 2))
    st = _state(g, phi0, 7.0 * phi0)
    e0 = energy(st)
    out = solver.evolve(st, 2.0)
    assert abs(energy(out) - e0) / e0 < 1e-3


# run / classify --------------------------------------------------------------------


def test_zero_data_runs_global_with_zero_series():
    st = _pulse(amplitude=0.0, t_max=1.5)
    out = run(SolverConfig(t_max=1.5), st)
    assert out.label == GLOBAL and out.termination_reason == "t_max"
    assert out.t_end == pytest.approx(1.5)
    for row in out.series:
        for k in ("phi", "phit", "phir", "dphi", "Lphi", "Lphit", "grad", "energy"):
            assert row[k] == 0.0
    assert out.mu_min == 1.0


def test_global_outcome_reaches_t_max_with_green_guards():
    st = _pulse(amplitude=0.3, t_max=3.0)
    out = run(SolverConfig(t_max=3.0), st)
    assert out.label == GLOBAL
    assert out.t_end == pytest.approx(3.0)
    assert not {"grad_cap", "mu_collapse", "dt_collapse", "hyperbolicity_loss"} & set(out.signals)
    assert "dphi" in out.fits and "alpha" in out.fits["dphi"]
    assert 0.5 < out.mu_min < 1.0


def test_blowup_regime_is_certified_by_two_signals():
    st = _pulse(delta=0.1, amplitude=0.5, p=1, cells=128, t_max=2.0)
    out = run(SolverConfig(t_max=2.0), st)
    assert out.label == BLOWUP
    assert "grad_cap" in out.signals and "mu_collapse" in out.signals
    assert 1.0 <= out.t_star < 2.0
    assert out.t_star == min(out.signals["grad_cap"], out.signals["mu_collapse"])
    assert out.mu_min < 1e-3


def test_lone_signal_is_inconclusive():
    """With tracking off only the gradient cap can fire."""
    st = _pulse(delta=0.1, amplitude=0.5, p=1, cells=128, t_max=2.0)
    out = run(SolverConfig(t_max=2.0, track_geometry=False), st)
    assert out.label == INCONCLUSIVE
    assert out.t_star == out.signals["grad_cap"]
    last_dt = out.series[-1]["dt"]
    assert out.t_star + 0.1 <= out.t_end <= out.t_star + 0.1 + last_dt + 1e-12


def test_subsided_gradient_excursion_is_released():
    """Linear focusing of the incoming part at r = 0 briefly exceeds the resolution-relative
    cap with mu ~ 0.93; once it subsides uncorroborated the run continues."""
    st = _pulse(delta=0.05, amplitude=0.3, p=3, cells=32, t_max=2.5)
    out = run(SolverConfig(t_max=2.5), st)
    assert out.label == GLOBAL and out.t_end == 2.5 and "grad_cap" not in out.signals
    assert 1.9 < out.signals["grad_cap_transient"] < 2.2
    assert out.signals["grad_cap_transient_radius"] < 0.05
    assert out.signals["grad_cap_transient_peak"] > out.grad_cap
    assert out.mu_min > 0.9


def test_fixed_cap_alone_does_not_fire_on_a_finite_grid():
    st = _pulse(delta=0.1, amplitude=0.5, p=1, cells=64, t_max=2.0)
    out = run(SolverConfig(t_max=2.0, grad_cap_cells=0.0), st)
    assert "grad_cap" not in out.signals
    assert out.label == INCONCLUSIVE and "mu_collapse" in out.signals


def test_classify_policy():
    cfg = SolverConfig(t_max=2.0)
    st = _pulse(amplitude=0.0, t_max=2.0)
    assert classify(cfg, st, {}, "t_max").label == GLOBAL
    assert classify(cfg, st, {"tracking_stopped": 1.5}, "t_max").label == GLOBAL
    transient = {"grad_cap_transient": 1.2, "grad_cap_transient_radius": 0.0, "grad_cap_transient_peak": 9.0}
    assert classify(cfg, st, transient, "t_max").label == GLOBAL
    out = classify(cfg, st, {"grad_cap": 1.4, "mu_collapse": 1.3, "mu_collapse_radius": 1.2}, "grad_cap")
    assert out.label == BLOWUP and out.t_star == 1.3 and out.blowup_radius == 1.2
    out = classify(cfg, st, {"grad_cap": 1.4, "dt_collapse": 1.5}, "dt_collapse")
    assert out.label == BLOWUP and out.t_star == 1.4
    for lone in ({"grad_cap": 1.4}, {"mu_collapse": 1.3}, {"dt_collapse": 1.2}, {"hyperbolicity_loss": 1.1}):
        out = classify(cfg, st, dict(lone), "x")
        assert out.label == INCONCLUSIVE and out.t_star == min(lone.values())


def test_run_records_errors_instead_of_raising():
    g = RadialGrid(3.2, 640)
    phit = np.zeros(g.n + 1)
    phit[300:310] = -0.85  # 1 + phit = 0.15 is below the 0.5 floor
    st = _state(g, np.zeros(g.n + 1), phit, p=1, delta=0.1)
    out = run(SolverConfig(t_max=2.0, hyp_floor=0.5, track_geometry=False), st)
    assert out.label == INCONCLUSIVE
    assert out.termination_reason == "hyperbolicity_loss"
    assert out.error.startswith("HyperbolicityLoss")


def test_run_is_deterministic():
    a = run(SolverConfig(t_max=1.5), _pulse(t_max=1.5))
    b = run(SolverConfig(t_max=1.5), _pulse(t_max=1.5))
    assert a.series == b.series
    np.testing.assert_array_equal(a.final_state.phi, b.final_state.phi)
