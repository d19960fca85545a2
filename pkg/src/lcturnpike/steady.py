"""Steady pair of the static problem attached to a feasible initial state.

The steady state solves ``min f(z, u)`` over equilibria ``Az + Bu + b = 0``
whose uncontrollable coordinates are pinned, ``P2'z + c = q2``. In the
controllable coordinates ``z = P1 y1 + P2 y2`` with ``y2 = q2 - c`` fixed,
this leaves a strictly convex problem in ``(y1, u)`` with ``k`` equality
constraints ``A11 y1 + B1 u = -P1'b - A12 y2``; its optimality system is
solved by damped Newton.

Full multipliers satisfy

    f_x + A' lambda1 + P2 lambda2 = 0,   f_u + B' lambda1 = 0.

``lambda1 = P1 nu + P2 lambda12`` where ``nu`` is the reduced multiplier
and ``lambda12`` is a free gauge (zero by default).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConsistencyError, FeasibilityError, SolverError
from .system_model import QuadraticCost

__all__ = ["SteadyPair", "ReducedSolution", "steady_y2", "solve_reduced_kkt",
           "assemble_steady", "solve_steady", "kkt_residual",
           "qp_oracle_steady"]


@dataclass(frozen=True)
class SteadyPair:
    """``(x*, u*)`` with multipliers, ``V* = f(x*, u*)`` and diagnostics."""

    x_star: np.ndarray
    u_star: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    v_star: float
    kkt_residual: float
    iterations: int = 0
    y2_star: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self):
        return {"x_star": self.x_star.tolist(), "u_star": self.u_star.tolist(),
                "lambda1": self.lambda1.tolist(),
                "lambda2": self.lambda2.tolist(), "v_star": self.v_star,
                "kkt_residual": self.kkt_residual,
                "iterations": self.iterations}


@dataclass(frozen=True)
class ReducedSolution:
    y1: np.ndarray
    u: np.ndarray
    nu: np.ndarray
    iterations: int
    history: list


def steady_y2(cert, c, allow_infeasible=False):
    """``y2* = q2 - c``.

    With ``allow_infeasible`` the least-squares kernel component of an
    infeasible certificate is used, which gives a candidate steady state for
    reporting but carries no turnpike meaning.
    """
    if not cert.feasible and not allow_infeasible:
        raise FeasibilityError(
            f"initial state is not feasible (residual {cert.residual:.3e})")
    return np.asarray(cert.q2, dtype=float) - np.asarray(c, dtype=float)


def _reduced_parts(dec, cost, y2, b):
    k, m = dec.k, dec.B1.shape[1]
    P1, P2 = dec.P1, dec.P2
    base = P2 @ y2
    d = np.concatenate([np.zeros(k + m), -(P1.T @ b) - dec.A12 @ y2])

    def residual(v):
        z, u, nu = v[:k], v[k:k + m], v[k + m:]
        g = cost.grad(P1 @ z + base, u)
        n = P1.shape[0]
        return np.concatenate([P1.T @ g[:n] + dec.A11.T @ nu,
                               g[n:] + dec.B1.T @ nu,
                               dec.A11 @ z + dec.B1 @ u]) - d

    def jacobian(v):
        z, u = v[:k], v[k:k + m]
        n = P1.shape[0]
        H = cost.hess(P1 @ z + base, u)
        E = scipy.linalg.block_diag(P1, np.eye(m))
        Qr = E.T @ H @ E
        D = np.hstack([dec.A11, dec.B1])
        return np.block([[Qr, D.T], [D, np.zeros((k, k))]])

    return residual, jacobian


def solve_reduced_kkt(dec, cost, y2_star, b, tol=1e-10, max_iter=100):
    """Damped Newton on the reduced optimality system.

    The merit is ``1/2 |g - d|^2`` with Armijo backtracking (slope ``1e-4``,
    factor 0.5, unit first step), started from the origin.

    Raises
    ------
    SolverError
        On a singular Jacobian or after ``max_iter`` iterations.
    """
    k, m = dec.k, dec.B1.shape[1]
    residual, jacobian = _reduced_parts(dec, cost, np.asarray(y2_star, float),
                                        np.asarray(b, float))
    v = np.zeros(2 * k + m)
    F = residual(v)
    history = [float(np.max(np.abs(F)))]
    it = 0
    while history[-1] > tol:
        if it >= max_iter:
            raise SolverError(f"reduced Newton did not converge in {max_iter} "
                              f"iterations, residual {history[-1]:.3e}",
                              history)
        J = jacobian(v)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular reduced Jacobian; strong convexity or "
                              "controllability of (A11, B1) fails",
                              history) from exc
        phi = 0.5 * F @ F
        t = 1.0
        while True:
            v_new = v + t * step
            F_new = residual(v_new)
            if 0.5 * F_new @ F_new <= (1.0 - 2e-4 * t) * phi or t < 1e-12:
                break
            t *= 0.5
        v, F = v_new, F_new
        history.append(float(np.max(np.abs(F))))
        it += 1
    return ReducedSolution(y1=v[:k], u=v[k:k + m], nu=v[k + m:],
                           iterations=it, history=history)


def kkt_residual(sys, dec, cost, c, q2, x_star, u_star, lambda1, lambda2):
    """Largest block norm of the full steady optimality system."""
    g = cost.grad(x_star, u_star)
    n = sys.n
    parts = [g[:n] + sys.A.T @ lambda1 + dec.P2 @ lambda2,
             g[n:] + sys.B.T @ lambda1,
             sys.A @ x_star + sys.B @ u_star + sys.b,
             dec.P2.T @ x_star + c - q2]
    return float(max(np.linalg.norm(p) if p.size else 0.0 for p in parts))


def assemble_steady(sys, dec, cost, y2_star, red, c, tol_kkt=1e-9,
                    lambda12=None):
    """Lift a reduced solution to ``(x*, u*, lambda1, lambda2, V*)``.

    Raises
    ------
    ConsistencyError
        If the lifted pair violates the full system by more than ``tol_kkt``.
    """
    P1, P2 = dec.P1, dec.P2
    y2 = np.asarray(y2_star, dtype=float)
    lam12 = np.zeros(P2.shape[1]) if lambda12 is None else np.asarray(lambda12, float)
    x_star = P1 @ red.y1 + P2 @ y2
    u_star = np.array(red.u, dtype=float)
    fx = cost.grad(x_star, u_star)[:sys.n]
    lambda1 = P1 @ red.nu + P2 @ lam12
    lambda2 = -(P2.T @ fx + dec.A12.T @ red.nu + dec.A22.T @ lam12)
    q2 = y2 + c
    res = kkt_residual(sys, dec, cost, c, q2, x_star, u_star, lambda1, lambda2)
    if res > tol_kkt:
        raise ConsistencyError(f"steady optimality residual {res:.3e} exceeds "
                               f"{tol_kkt:.1e}")
    return SteadyPair(x_star=x_star, u_star=u_star, lambda1=lambda1,
                      lambda2=lambda2, v_star=float(cost.eval(x_star, u_star)),
                      kkt_residual=res, iterations=red.iterations, y2_star=y2)


def solve_steady(sys, dec, cost, spaces, cert, tol=1e-10, max_iter=100,
                 tol_kkt=1e-9, allow_infeasible=False):
    """``steady_y2`` followed by the reduced solve and the lift."""
    y2 = steady_y2(cert, spaces.c, allow_infeasible)
    red = solve_reduced_kkt(dec, cost, y2, sys.b, tol, max_iter)
    return assemble_steady(sys, dec, cost, y2, red, spaces.c, tol_kkt)


def qp_oracle_steady(sys, dec, cost, y2_star, rtol=1e-10):
    """Direct saddle-point solve of the steady problem for a quadratic cost.

    The constraint rows ``[[A, B], [P2', 0]]`` are linearly dependent (the
    uncontrollable rows of ``Az + Bu + b = 0`` repeat the pinned ones), so
    they are first compressed to an independent set by an SVD. Returns
    ``(x*, u*, lambda1, lambda2)`` with minimum-norm multipliers.
    """
    if not isinstance(cost, QuadraticCost):
        raise TypeError("the saddle-point oracle needs a QuadraticCost")
    n, m = sys.n, sys.m
    P2 = dec.P2
    C = np.vstack([np.hstack([sys.A, sys.B]),
                   np.hstack([P2.T, np.zeros((P2.shape[1], m))])])
    e = np.concatenate([-sys.b, np.asarray(y2_star, float)])
    U, s, Vh = np.linalg.svd(C)
    r = int(np.sum(s > rtol * max(s[0], 1.0)))
    lost = U[:, r:].T @ e
    if lost.size and np.linalg.norm(lost) > 1e-8 * (1.0 + np.linalg.norm(e)):
        raise SolverError("steady constraints are inconsistent")
    Cr = s[:r, None] * Vh[:r]
    er = U[:, :r].T @ e
    K = np.block([[cost.H, Cr.T], [Cr, np.zeros((r, r))]])
    g0 = np.concatenate([cost.q, cost.r])
    sol = np.linalg.solve(K, np.concatenate([-g0, er]))
    w = sol[:n + m]
    mult = scipy.linalg.lstsq(C.T, -(cost.H @ w + g0))[0]
    return w[:n], w[n:], mult[:n], mult[n:]
