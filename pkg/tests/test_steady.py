import numpy as np
import pytest
import scipy.linalg

from lcturnpike import (FeasibilityError, LinearSystem, PerturbedQuadraticCost,
                        QuadraticCost, SolverError, assemble_steady,
                        build_spaces, certify, decompose, qp_oracle_steady,
                        solve_reduced_kkt, solve_steady, steady_y2)
from lcturnpike.feasibility import FeasibilityCertificate
from lcturnpike.steady import kkt_residual

from instances import e2_system, steady_instance, unit_cost


def _cert(q2, feasible=True):
    q2 = np.asarray(q2, float)
    return FeasibilityCertificate(feasible, q2, np.zeros_like(q2), q2, 0.0, 0,
                                  q2.size)


def test_steady_y2_examples():
    assert steady_y2(_cert([]), np.zeros(0)).size == 0
    np.testing.assert_array_equal(steady_y2(_cert([3.0]), [0.0]), [3.0])
    # A22 = [-1], c = -2: kernel component of w is 0, so y2* = 0 - c.
    sys = LinearSystem(np.diag([-1.0, -1.0]), [[1.0], [0.0]], [0.0, 2.0])
    dec = decompose(sys)
    sp = build_spaces(dec, sys.b)
    np.testing.assert_allclose(sp.c, [-2.0])
    cert = certify(sp, dec.P2, [0.0, 5.0])
    assert cert.feasible
    np.testing.assert_allclose(cert.q2, [0.0], atol=1e-15)
    np.testing.assert_allclose(steady_y2(cert, sp.c), [2.0])
    with pytest.raises(FeasibilityError):
        steady_y2(_cert([1.0], feasible=False), [0.0])


def _pipeline(sys, cost, x):
    dec = decompose(sys)
    sp = build_spaces(dec, sys.b)
    cert = certify(sp, dec.P2, x)
    return dec, sp, cert, solve_steady(sys, dec, cost, sp, cert)


def test_scalar_trivial():
    sys = LinearSystem([[-1.0]], [[1.0]], [0.0])
    _, _, _, st = _pipeline(sys, unit_cost(1, 1), [2.0])
    assert st.x_star.tolist() == [0.0] and st.u_star.tolist() == [0.0]
    assert st.lambda1.tolist() == [0.0] and st.lambda2.size == 0
    assert st.v_star == 0.0


def test_e2_steady_pair():
    sys = e2_system()
    dec, sp, cert, st = _pipeline(sys, unit_cost(2, 1), [1.0, 3.0])
    np.testing.assert_allclose(st.x_star, [0.0, 3.0], atol=1e-14)
    np.testing.assert_allclose(st.u_star, [0.0], atol=1e-14)
    np.testing.assert_allclose(st.lambda1, [0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(st.lambda2, [-3.0], atol=1e-14)
    assert st.v_star == pytest.approx(4.5, abs=1e-14)
    xs, us, l1, l2 = qp_oracle_steady(sys, dec, unit_cost(2, 1), st.y2_star)
    assert np.linalg.norm(xs - st.x_star) + np.linalg.norm(us - st.u_star) <= 1e-10


def test_scalar_oracle():
    sys = LinearSystem([[-1.0]], [[1.0]], [0.0])
    dec = decompose(sys)
    xs, us, _, _ = qp_oracle_steady(sys, dec, unit_cost(1, 1), np.zeros(0))
    np.testing.assert_allclose(xs, [0.0], atol=1e-15)
    np.testing.assert_allclose(us, [0.0], atol=1e-15)


@pytest.mark.parametrize("seed", range(30))
def test_newton_matches_oracle(seed):
    rng = np.random.default_rng(2000 + seed)
    sys, dec, sp, cert, cost, x = steady_instance(rng)
    assert cert.feasible
    st = solve_steady(sys, dec, cost, sp, cert)
    xs, us, l1, l2 = qp_oracle_steady(sys, dec, cost, st.y2_star)
    err = np.linalg.norm(st.x_star - xs) + np.linalg.norm(st.u_star - us)
    assert err <= 1e-7 * (1 + np.linalg.norm(np.concatenate([xs, us])))
    assert st.kkt_residual <= 1e-10
    # Oracle multipliers satisfy the same system.
    assert kkt_residual(sys, dec, cost, sp.c, cert.q2, xs, us, l1, l2) <= 1e-8


def test_random_n4_k3_instance():
    rng = np.random.default_rng(7)
    for _ in range(50):
        sys, dec, sp, cert, cost, x = steady_instance(rng, n=4, m=2)
        if dec.k == 3:
            break
    assert dec.k == 3
    st = solve_steady(sys, dec, cost, sp, cert)
    xs, us, _, _ = qp_oracle_steady(sys, dec, cost, st.y2_star)
    assert np.linalg.norm(st.x_star - xs) + np.linalg.norm(st.u_star - us) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_gauge_independence(seed):
    rng = np.random.default_rng(3000 + seed)
    sys, dec, sp, cert, cost, x = steady_instance(rng)
    y2 = steady_y2(cert, sp.c)
    red = solve_reduced_kkt(dec, cost, y2, sys.b)
    a = assemble_steady(sys, dec, cost, y2, red, sp.c)
    g = rng.standard_normal(dec.n - dec.k)
    b = assemble_steady(sys, dec, cost, y2, red, sp.c, lambda12=g)
    np.testing.assert_allclose(a.x_star, b.x_star, atol=1e-10)
    np.testing.assert_allclose(a.u_star, b.u_star, atol=1e-10)
    assert abs(a.v_star - b.v_star) <= 1e-10
    if g.size:
        assert np.linalg.norm(a.lambda1 - b.lambda1) > 1e-3


def test_partial_signature_e2():
    sys = e2_system()
    cost = unit_cost(2, 1)
    _, _, c1, s1 = _pipeline(sys, cost, [1.0, 3.0])
    _, _, c2, s2 = _pipeline(sys, cost, [-2.0, -1.0])
    d = np.linalg.norm(s1.x_star - s2.x_star)
    assert d == pytest.approx(np.linalg.norm(c1.q2 - c2.q2), abs=1e-12)
    assert d == pytest.approx(4.0, abs=1e-12)


def test_perturbed_cost_newton():
    rng = np.random.default_rng(11)
    sys, dec, sp, cert, cost, x = steady_instance(rng, n=4, m=2)
    pert = PerturbedQuadraticCost(cost, rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 2))
    st = solve_steady(sys, dec, pert, sp, cert)
    assert st.iterations >= 1 and st.kkt_residual <= 1e-10
    # Minimality against the affine constraint set, sampled.
    C = np.vstack([np.hstack([sys.A, sys.B]),
                   np.hstack([dec.P2.T, np.zeros((dec.n - dec.k, 2))])])
    N = scipy.linalg.null_space(C)
    w0 = np.concatenate([st.x_star, st.u_star])
    for _ in range(50):
        w = w0 + N @ rng.standard_normal(N.shape[1])
        assert pert.eval(w[:4], w[4:]) >= st.v_star - 1e-9


def test_max_iter_guard():
    rng = np.random.default_rng(12)
    sys, dec, sp, cert, cost, x = steady_instance(rng, n=3, m=1)
    pert = PerturbedQuadraticCost(cost, [3.0] * 3, [3.0])
    y2 = steady_y2(cert, sp.c)
    with pytest.raises(SolverError) as info:
        solve_reduced_kkt(dec, pert, y2, sys.b, max_iter=0)
    assert len(info.value.history) == 1


def test_oracle_rejects_nonquadratic():
    sys = e2_system()
    dec = decompose(sys)
    with pytest.raises(TypeError):
        qp_oracle_steady(sys, dec, PerturbedQuadraticCost(unit_cost(2, 1)), [0.0])
