import math

import numpy as np
import pytest

from lcturnpike import (AssumptionViolation, FitError, Grid, LinearSystem,
                        PerturbedQuadraticCost, build_spaces, certify,
                        decompose, deviation_series, fit_envelope,
                        lemma_identity_residual, observability_inequality_check,
                        solve_lc, solve_steady, value_gap_sweep)
from lcturnpike.horizon import Trajectory
from lcturnpike.turnpike import observability_constant, observability_gramian

from instances import e2_system, e3_system, scalar_lq, unit_cost


def _steady(sys, cost, x, allow=False):
    dec = decompose(sys)
    sp = build_spaces(dec, sys.b)
    cert = certify(sp, dec.P2, x)
    return dec, cert, solve_steady(sys, dec, cost, sp, cert, allow_infeasible=allow)


def test_fit_synthetic_envelope():
    T = 30.0
    t = np.linspace(0, T, 3001)
    dev = 2 * np.exp(-0.7 * t) + 2 * np.exp(-0.7 * (T - t))
    fit = fit_envelope(t, dev)
    assert fit.K == pytest.approx(2.0, rel=0.02)
    assert fit.lam == pytest.approx(0.7, rel=0.01)
    assert fit.r2 >= 0.999 and fit.confirmed


def test_fit_constant_not_confirmed():
    t = np.linspace(0, 20, 2001)
    fit = fit_envelope(t, np.ones_like(t))
    assert abs(fit.lam) <= 1e-12 and not fit.confirmed


def test_fit_too_few_nodes():
    t = np.linspace(0, 4, 11)
    with pytest.raises(FitError):
        fit_envelope(t, np.exp(-t))


def test_fit_at_floor_is_on_turnpike():
    t = np.linspace(0, 20, 2001)
    fit = fit_envelope(t, np.zeros_like(t))
    assert math.isinf(fit.lam) and fit.confirmed
    assert fit.to_dict()["lambda"] is None


def test_deviation_series_examples():
    sys = e2_system()
    cost = unit_cost(2, 1)
    x = np.array([1.0, 3.0])
    _, _, st = _steady(sys, cost, x)
    g = Grid(4.0, 40)
    still = Trajectory(g.times, np.tile(st.x_star, (41, 1)),
                       np.tile(st.u_star, (41, 1)), None, 0.0)
    dx, du = deviation_series(still, st)
    assert np.all(dx == 0) and np.all(du == 0)
    tr = solve_lc(sys, cost, x, g)
    dx, _ = deviation_series(tr, st)
    assert dx[0] == np.linalg.norm(x - st.x_star)


def test_scalar_lq_rate():
    sys, cost = scalar_lq()
    _, _, st = _steady(sys, cost, [1.0])
    rep = value_gap_sweep(sys, cost, [1.0], st, [40.0])
    r = rep.records[0]
    assert r.fit_x.lam == pytest.approx(1.0, rel=0.1)
    assert r.fit_u.lam == pytest.approx(1.0, rel=0.1)


def test_empty_sweep():
    sys, cost = scalar_lq()
    _, _, st = _steady(sys, cost, [1.0])
    rep = value_gap_sweep(sys, cost, [1.0], st, [])
    assert rep.records == [] and rep.verdict == "not confirmed"


def test_scalar_gap_constant_to_three_digits():
    sys, cost = scalar_lq()
    _, _, st = _steady(sys, cost, [1.0])
    rep = value_gap_sweep(sys, cost, [1.0], st, [10, 20, 40, 80])
    gaps = [r.gap for r in rep.records]
    assert max(gaps) - min(gaps) <= 5e-4
    assert gaps[0] == pytest.approx(0.5, abs=1e-4)


def test_start_on_turnpike_slope():
    sys = e2_system()
    cost = unit_cost(2, 1)
    _, _, st = _steady(sys, cost, [0.0, 3.0])
    rep = value_gap_sweep(sys, cost, st.x_star, st, [10, 20, 40])
    assert rep.slope_matches(1e-6)
    for r in rep.records:
        assert abs(r.gap) <= 1e-9
        assert r.confirmed


def test_midpoint_decay_and_integral_metric():
    sys = e2_system()
    cost = unit_cost(2, 1)
    x = [1.0, 3.0]
    _, _, st = _steady(sys, cost, x)
    rep = value_gap_sweep(sys, cost, x, st, [20, 40, 60, 80])
    mid = {r.T: r.midpoint_dev_x for r in rep.records}
    assert mid[60.0] <= 0.1 * mid[20.0]
    Ts = np.array([r.T for r in rep.records])
    Ms = np.array([r.integral_metric for r in rep.records])
    slope = np.polyfit(np.log(Ts), np.log(Ms), 1)[0]
    assert -1.3 <= slope <= -0.7
    assert rep.verdict == "confirmed"


@pytest.mark.parametrize("perturbed", [False, True])
def test_control_turnpike_both_families(perturbed):
    sys = e2_system()
    cost = unit_cost(2, 1)
    if perturbed:
        cost = PerturbedQuadraticCost(cost, [1.0, 0.5], [1.0])
    x = [1.0, 3.0]
    _, _, st = _steady(sys, cost, x)
    r = value_gap_sweep(sys, cost, x, st, [20.0]).records[0]
    assert r.fit_x.confirmed
    assert r.fit_u.lam > 0 and r.fit_u.r2 >= 0.9


def test_oscillatory_partialness():
    sys = e3_system()
    cost = unit_cost(3, 1)
    bad = [1.0, 1.0, 0.0]
    _, cert, st = _steady(sys, cost, bad, allow=True)
    rep = value_gap_sweep(sys, cost, bad, st, [20, 40], feasible=cert.feasible)
    assert rep.verdict == "not confirmed"
    mids = [r.midpoint_dev_x for r in rep.records]
    assert mids[1] >= 0.5 * mids[0]
    good = [1.0, 0.0, 0.0]
    _, cert, st = _steady(sys, cost, good)
    assert value_gap_sweep(sys, cost, good, st, [20, 40]).verdict == "confirmed"


def test_identity_trivial_on_steady_trajectory():
    sys = e2_system()
    cost = unit_cost(2, 1)
    dec, _, st = _steady(sys, cost, [0.0, 3.0])
    g = Grid(10.0, 100)
    still = Trajectory(g.times, np.tile(st.x_star, (101, 1)),
                       np.tile(st.u_star, (101, 1)), None, 0.0)
    assert lemma_identity_residual(sys, dec, cost, st, still, 1.0, 9.0) <= 1e-15


@pytest.mark.parametrize("perturbed,tol", [(False, 1e-8), (True, 1e-6)])
def test_identity_residual(perturbed, tol):
    sys = e2_system()
    cost = unit_cost(2, 1)
    if perturbed:
        cost = PerturbedQuadraticCost(cost, [1.0, 1.0], [1.0])
    x = [1.0, 3.0]
    dec, _, st = _steady(sys, cost, x)
    tr = solve_lc(sys, cost, x, Grid(40.0, 2000))
    assert lemma_identity_residual(sys, dec, cost, st, tr, 5.0, 35.0) <= tol


def test_identity_rejects_off_grid_times():
    sys = e2_system()
    cost = unit_cost(2, 1)
    dec, _, st = _steady(sys, cost, [1.0, 3.0])
    tr = solve_lc(sys, cost, [1.0, 3.0], Grid(4.0, 40))
    with pytest.raises(ValueError):
        lemma_identity_residual(sys, dec, cost, st, tr, 0.05, 3.0)


def test_gramian_against_quadrature():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    C = rng.standard_normal((2, 3))
    from scipy.linalg import expm
    from scipy.integrate import quad_vec
    ref, _ = quad_vec(lambda r: expm(r * A.T) @ C.T @ C @ expm(r * A), 0, 1.0,
                      epsabs=1e-13)
    np.testing.assert_allclose(observability_gramian(A, C, 1.0), ref, rtol=1e-9)


def test_observability_constant_trivial():
    for alpha in (0.5, 1.0, 3.0):
        K = observability_constant(np.zeros((2, 2)), np.eye(2), alpha)
        assert K >= 1.0 / alpha
        _, worst = observability_inequality_check(np.zeros((2, 2)), np.eye(2),
                                                  alpha, n_trials=5)
        assert worst <= 1.0


@pytest.mark.parametrize("backward", [False, True])
def test_observability_random(backward):
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    C = rng.standard_normal((1, 3))
    _, worst = observability_inequality_check(A, C, 1.0, n_trials=50, seed=3,
                                              backward=backward)
    assert 0 < worst <= 1.0


def test_observability_requires_observable_pair():
    with pytest.raises(AssumptionViolation):
        observability_inequality_check(np.diag([1.0, 2.0]), [[1.0, 0.0]], 1.0)
