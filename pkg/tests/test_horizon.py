import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from lcturnpike import (Grid, LinearSystem, PerturbedQuadraticCost,
                        QuadraticCost, SolverError, SynthesisError, build_spaces,
                        certify, decompose, pmp_residual, pole_place_feedback,
                        riccati_lq_oracle, solve_lc, solve_steady,
                        suboptimal_feedback_run)
from lcturnpike.horizon import dynamics_residual, trapezoid
from lcturnpike.turnpike import energy_bound_margin

from instances import (e2_system, random_controllable_pair, scalar_lq,
                       third_order_lq, unit_cost)
from oracles import scalar_lq_state, scalar_lq_value


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0.0, 10)
    with pytest.raises(ValueError):
        Grid(1.0, 1)
    g = Grid.per_unit(2.5, 200)
    assert g.N == 500 and g.h == pytest.approx(0.005)
    assert g.times[0] == 0.0 and g.times[-1] == 2.5


def test_trapezoid_exact_for_linear():
    t = np.linspace(0, 3, 31)
    assert trapezoid(2 * t + 1, t[1]) == pytest.approx(12.0, rel=1e-14)


def test_zero_problem():
    sys = LinearSystem(np.array([[0.0, 1.0], [-1.0, -0.2]]), [[0.0], [1.0]], [0, 0])
    tr = solve_lc(sys, unit_cost(2, 1), [0.0, 0.0], Grid(5.0, 100))
    assert np.all(tr.X == 0) and np.all(tr.u == 0) and tr.cost == 0.0
    ref = riccati_lq_oracle(sys, unit_cost(2, 1), [0.0, 0.0], Grid(5.0, 100))
    assert np.all(ref.X == 0) and ref.cost == 0.0
    assert pmp_residual(sys, unit_cost(2, 1), tr) == (0.0, 0.0)


def test_scalar_against_riccati_and_closed_form():
    sys, cost = scalar_lq()
    g = Grid(10.0, 2000)
    tr = solve_lc(sys, cost, [1.0], g)
    ref = riccati_lq_oracle(sys, cost, [1.0], g)
    assert np.max(np.abs(ref.X[:, 0] - scalar_lq_state(g.times, 10.0))) <= 1e-9
    assert ref.cost == pytest.approx(scalar_lq_value(10.0), rel=1e-12)
    assert np.max(np.abs(tr.X - ref.X)) <= 1e-3
    assert abs(tr.cost - ref.cost) <= 1e-5 * abs(ref.cost)


def test_trajectory_invariants():
    sys, cost, x = third_order_lq()
    tr = solve_lc(sys, cost, x, Grid(6.0, 600))
    assert np.array_equal(tr.X[0], x)
    assert np.all(tr.psi[-1] == 0.0)
    assert np.all(dynamics_residual(sys, tr) <= 1e-9)
    assert tr.rows().shape == (601, 1 + 3 + 1 + 3)


def test_refinement_reduces_discrepancy_fourfold():
    sys, cost, x = third_order_lq()
    errs = []
    for N in (1000, 2000):
        g = Grid(10.0, N)
        errs.append(np.max(np.abs(solve_lc(sys, cost, x, g).X
                                  - riccati_lq_oracle(sys, cost, x, g).X)))
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_riccati_gain_limit():
    sys, cost = scalar_lq()
    ref = riccati_lq_oracle(sys, cost, [1.0], Grid(30.0, 3000))
    # u = -P x with P(0) = tanh(T) -> 1, so the closed loop rate tends to 1.
    assert ref.u[0, 0] == pytest.approx(-1.0, abs=1e-12)
    assert ref.psi[0, 0] == pytest.approx(np.tanh(30.0), abs=1e-12)


def test_riccati_rejects_nonquadratic():
    sys, cost = scalar_lq()
    with pytest.raises(TypeError):
        riccati_lq_oracle(sys, PerturbedQuadraticCost(cost), [1.0], Grid(1.0, 10))


def test_pmp_residual_order():
    sys, cost = scalar_lq()
    res = [pmp_residual(sys, cost, solve_lc(sys, cost, [1.0], Grid(10.0, N)))
           for N in (500, 2000)]
    assert max(res[1]) <= 1e-5
    for i in range(2):
        assert 12.0 <= res[0][i] / res[1][i] <= 20.0


def test_e2_interior_on_steady_state():
    sys = e2_system()
    tr = solve_lc(sys, unit_cost(2, 1), [1.0, 3.0], Grid(40.0, 8000))
    mid = tr.X[4000]
    assert np.linalg.norm(mid - [0.0, 3.0]) <= 1e-4


def test_perturbed_cost_needs_several_newton_steps():
    sys = e2_system()
    cost = PerturbedQuadraticCost(unit_cost(2, 1), [1.0, 1.0], [1.0])
    tr = solve_lc(sys, cost, [2.0, 3.0], Grid(10.0, 1000))
    assert tr.newton_iters >= 2 and tr.history[-1] <= 1e-10
    adj, stat = pmp_residual(sys, cost, tr)
    assert adj <= 1e-4 and stat <= 1e-4


def test_newton_failure_is_typed():
    sys = e2_system()
    cost = PerturbedQuadraticCost(unit_cost(2, 1), [1.0, 1.0], [1.0])
    with pytest.raises(SolverError) as info:
        solve_lc(sys, cost, [2.0, 3.0], Grid(10.0, 100), max_iter=1)
    assert len(info.value.history) == 2


def test_discrete_problem_strictly_convex():
    # Projected Hessian of sum_j w_j f(X_j, u_j) on the trapezoid constraints.
    sys, cost, x = third_order_lq()
    n, m, N, h = 3, 1, 6, 0.2
    w = np.full(N + 1, h)
    w[[0, -1]] = 0.5 * h
    nv = (N + 1) * (n + m)
    H = scipy.linalg.block_diag(*[wj * cost.H for wj in w])
    rows = []
    I = np.eye(n)
    for j in range(N):
        r = np.zeros((n, nv))
        a, b = j * (n + m), (j + 1) * (n + m)
        r[:, a:a + n] = -I - 0.5 * h * sys.A
        r[:, a + n:a + n + m] = -0.5 * h * sys.B
        r[:, b:b + n] = I - 0.5 * h * sys.A
        r[:, b + n:b + n + m] = -0.5 * h * sys.B
        rows.append(r)
    fix = np.zeros((n, nv))
    fix[:, :n] = I
    Z = scipy.linalg.null_space(np.vstack(rows + [fix]))
    lam = np.linalg.eigvalsh(Z.T @ H @ Z)[0]
    assert lam >= cost.delta * w.min() - 1e-12


def test_energy_inequality_along_trajectories():
    for sys, cost, x in [third_order_lq(), (e2_system(), unit_cost(2, 1), np.array([1.0, 3.0]))]:
        tr = solve_lc(sys, cost, x, Grid(8.0, 1600))
        forcing = tr.u @ sys.B.T + sys.b
        assert energy_bound_margin(sys.A, tr.times, tr.X, forcing) >= -1e-8


def test_pole_placement_examples():
    F = pole_place_feedback([[0.0]], [[1.0]], 1.0)
    assert F[0, 0] <= -1.0
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    F = pole_place_feedback(A, B, 0.5)
    assert np.max(np.linalg.eigvals(A + B @ F).real) <= -0.5
    with pytest.raises(SynthesisError):
        pole_place_feedback([[0.0, 0.0], [0.0, 1.0]], [[1.0], [0.0]], 1.0)
    with pytest.raises(ValueError):
        pole_place_feedback([[0.0]], [[1.0]], 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 2),
       st.floats(0.1, 3.0))
def test_pole_placement_random(seed, k, m, decay):
    A11, B1 = random_controllable_pair(np.random.default_rng(seed), k, m)
    F = pole_place_feedback(A11, B1, decay)
    assert np.max(np.linalg.eigvals(A11 + B1 @ F).real) <= -decay + 1e-8


def _e2_setup(x):
    sys = e2_system()
    cost = unit_cost(2, 1)
    dec = decompose(sys)
    sp = build_spaces(dec, sys.b)
    st_ = solve_steady(sys, dec, cost, sp, certify(sp, dec.P2, x))
    return sys, cost, dec, st_


def test_feedback_from_steady_state_stays():
    sys, cost, dec, st_ = _e2_setup([1.0, 3.0])
    F = pole_place_feedback(dec.A11, dec.B1, 1.0)
    run = suboptimal_feedback_run(sys, dec, cost, st_, F, st_.x_star, Grid(10.0, 200))
    assert np.all(run.X == st_.x_star) and np.all(run.u == st_.u_star)
    assert run.cost == pytest.approx(10.0 * st_.v_star, rel=1e-13)
    assert run.witness == 0.0


def test_feedback_witness_converges_and_bounds_optimum():
    x = [1.0, 3.0]
    sys, cost, dec, st_ = _e2_setup(x)
    F = pole_place_feedback(dec.A11, dec.B1, 1.0)
    wit = []
    for T in (20.0, 40.0, 80.0):
        g = Grid.per_unit(T, 50)
        run = suboptimal_feedback_run(sys, dec, cost, st_, F, x, g)
        wit.append(run.witness)
        opt = solve_lc(sys, cost, x, g)
        assert opt.cost <= run.cost + 1e-8 * (1 + abs(run.cost))
    assert abs(wit[1] - wit[0]) <= 1e-6 and abs(wit[2] - wit[1]) <= 1e-6
    assert np.linalg.norm(run.X[-1] - st_.x_star) <= 1e-12
