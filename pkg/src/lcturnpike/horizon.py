"""Finite-horizon optimal control on a uniform grid.

:func:`solve_lc` collocates the first-order optimality system

    X' = AX + Bu + b,        X(0) = x,
    psi' = -A'psi - f_x,     psi(T) = 0,
    B'psi + f_u = 0,

with the trapezoidal rule between nodes and stationarity at every node,
then runs Newton with a banded factorization. The node controls are
second-order accurate up to both ends of the horizon, and the adjoint
comes out of the solve directly.

:func:`riccati_lq_oracle` is an independent quadratic-cost reference
(Riccati sweep with RK4), and :func:`suboptimal_feedback_run` simulates the
stabilizing feedback around a steady pair that gives an upper bound on the
optimal cost.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SolverError, SynthesisError
from .kalman import hautus_controllable
from .system_model import QuadraticCost

__all__ = ["Grid", "Trajectory", "solve_lc", "riccati_lq_oracle",
           "pmp_residual", "dynamics_residual", "pole_place_feedback",
           "suboptimal_feedback_run", "trapezoid"]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``N`` intervals on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) < 2:
            raise ValueError(f"need at least 2 intervals, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def per_unit(cls, T, N_per_unit):
        return cls(T, max(2, int(np.ceil(N_per_unit * T - 1e-9))))

    @property
    def h(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class Trajectory:
    """Node samples of state, control and adjoint with the discrete cost."""

    times: np.ndarray
    X: np.ndarray
    u: np.ndarray
    psi: np.ndarray | None
    cost: float
    converged: bool = True
    newton_iters: int = 0
    history: list = field(default_factory=list)
    witness: float | None = None

    @property
    def h(self):
        return self.times[1] - self.times[0]

    def rows(self):
        """Node table ``[t, x, u, psi]`` with missing adjoints left out."""
        cols = [self.times[:, None], self.X, self.u]
        if self.psi is not None:
            cols.append(self.psi)
        return np.hstack(cols)


def trapezoid(values, h):
    """Composite trapezoid rule on uniformly spaced samples (axis 0)."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 2:
        return 0.0 * v[0] if v.shape[0] else 0.0
    return h * (v.sum(axis=0) - 0.5 * (v[0] + v[-1]))


# Newton on the collocated optimality system

def _split(z, N, n, m):
    Z = z.reshape(N + 1, 2 * n + m)
    return Z[:, :n], Z[:, n:2 * n], Z[:, 2 * n:]


def _residual(sys, cost, x0, h, z, N):
    n, m = sys.n, sys.m
    X, P, U = _split(z, N, n, m)
    A, B, b = sys.A, sys.B, sys.b
    fx, fu = cost.grad_nodes(X, U)
    F = X @ A.T + U @ B.T + b
    G = -P @ A - fx
    stat = P @ B + fu
    dyn = X[1:] - X[:-1] - 0.5 * h * (F[:-1] + F[1:])
    adj = P[1:] - P[:-1] - 0.5 * h * (G[:-1] + G[1:])
    body = np.hstack([dyn, adj, stat[1:]]).reshape(-1)
    return np.concatenate([X[0] - x0, stat[0], body, P[-1]])


class _BandedJacobian:
    """Sparsity pattern of the collocation Jacobian with banded storage.

    Row blocks: ``[X_0 - x; stat_0]``, then per interval
    ``[dyn_j; adj_j; stat_{j+1}]``, then ``psi_N``. Unknown blocks per node
    are ``[X_j, psi_j, u_j]``.
    """

    def __init__(self, n, m, N):
        self.n, self.m, self.N = n, m, N
        self.s = s = 2 * n + m
        self.size = (N + 1) * s
        j = np.arange(N)
        r_int = n + m + j * s
        self._slots = {}

        def reg(tag, r0, c0, p, q):
            rr = (np.asarray(r0)[:, None, None] + np.arange(p)[None, :, None]
                  + 0 * np.arange(q)[None, None, :])
            cc = (np.asarray(c0)[:, None, None] + 0 * np.arange(p)[None, :, None]
                  + np.arange(q)[None, None, :])
            self._slots[tag] = (rr.reshape(-1), cc.reshape(-1), len(r0), p, q)

        z0 = np.array([0])
        cX = j * s
        cP = j * s + n
        cU = j * s + 2 * n
        reg("x0", z0, z0, n, n)
        reg("s0_P", z0 + n, z0 + n, m, n)
        reg("s0_X", z0 + n, z0, m, n)
        reg("s0_U", z0 + n, z0 + 2 * n, m, m)
        reg("d_Xa", r_int, cX, n, n)
        reg("d_Xb", r_int, cX + s, n, n)
        reg("d_Ua", r_int, cU, n, m)
        reg("d_Ub", r_int, cU + s, n, m)
        ra = r_int + n
        reg("a_Pa", ra, cP, n, n)
        reg("a_Pb", ra, cP + s, n, n)
        reg("a_Xa", ra, cX, n, n)
        reg("a_Xb", ra, cX + s, n, n)
        reg("a_Ua", ra, cU, n, m)
        reg("a_Ub", ra, cU + s, n, m)
        rs = r_int + 2 * n
        reg("s_P", rs, cP + s, m, n)
        reg("s_X", rs, cX + s, m, n)
        reg("s_U", rs, cU + s, m, m)
        reg("pN", np.array([self.size - n]), np.array([N * s + n]), n, n)
        rows = np.concatenate([v[0] for v in self._slots.values()])
        cols = np.concatenate([v[1] for v in self._slots.values()])
        self.kl = int(max(0, np.max(rows - cols)))
        self.ku = int(max(0, np.max(cols - rows)))

    def assemble(self, sys, cost, h, z):
        n, m, N = self.n, self.m, self.N
        X, _, U = _split(z, N, n, m)
        H = np.asarray(cost.hess_nodes(X, U))
        fxx, fxu = H[:, :n, :n], H[:, :n, n:]
        fux, fuu = H[:, n:, :n], H[:, n:, n:]
        A, B = sys.A, sys.B
        I = np.eye(n)
        vals = {
            "x0": I, "s0_P": B.T, "s0_X": fux[0], "s0_U": fuu[0],
            "d_Xa": -I - 0.5 * h * A, "d_Xb": I - 0.5 * h * A,
            "d_Ua": -0.5 * h * B, "d_Ub": -0.5 * h * B,
            "a_Pa": -I + 0.5 * h * A.T, "a_Pb": I + 0.5 * h * A.T,
            "a_Xa": 0.5 * h * fxx[:-1], "a_Xb": 0.5 * h * fxx[1:],
            "a_Ua": 0.5 * h * fxu[:-1], "a_Ub": 0.5 * h * fxu[1:],
            "s_P": B.T, "s_X": fux[1:], "s_U": fuu[1:], "pN": I,
        }
        ab = np.zeros((self.kl + self.ku + 1, self.size))
        for tag, (rr, cc, count, p, q) in self._slots.items():
            v = np.broadcast_to(vals[tag], (count, p, q)).reshape(-1)
            np.add.at(ab, (self.ku + rr - cc, cc), v)
        return ab


def solve_lc(sys, cost, x, grid, tol=1e-10, max_iter=50):
    """Optimal trajectory on ``grid`` for the initial state ``x``.

    Parameters
    ----------
    sys : LinearSystem
    cost : stage cost with ``*_nodes`` evaluators
    x : array_like, shape (n,)
    grid : Grid
    tol : float
        Stop when the sup-norm of the collocation residual is below ``tol``.
    max_iter : int

    Returns
    -------
    Trajectory
        ``cost`` is the trapezoidal quadrature of ``f`` over the nodes.

    Raises
    ------
    SolverError
        When Newton fails to reach ``tol``; ``history`` holds the residuals.
    """
    n, m, N, h = sys.n, sys.m, grid.N, grid.h
    x0 = np.asarray(x, dtype=float).reshape(-1)
    if x0.size != n:
        raise ValueError(f"initial state has length {x0.size}, expected {n}")
    jac = _BandedJacobian(n, m, N)
    Z = np.zeros((N + 1, 2 * n + m))
    Z[:, :n] = x0
    z = Z.reshape(-1)
    F = _residual(sys, cost, x0, h, z, N)
    history = [float(np.max(np.abs(F)))]
    it = 0
    while history[-1] > tol:
        if it >= max_iter:
            stalled = len(history) > 3 and history[-1] > 0.5 * history[-4]
            hint = "; the residual stagnates, try a finer grid" if stalled else ""
            raise SolverError(f"Newton did not converge in {max_iter} "
                              f"iterations (residual {history[-1]:.3e}){hint}",
                              history)
        ab = jac.assemble(sys, cost, h, z)
        try:
            step = scipy.linalg.solve_banded((jac.kl, jac.ku), ab, -F,
                                             check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"singular collocation Jacobian: {exc}",
                              history) from exc
        phi = 0.5 * F @ F
        t = 1.0
        while True:
            z_new = z + t * step
            F_new = _residual(sys, cost, x0, h, z_new, N)
            phi_new = 0.5 * F_new @ F_new
            if phi_new <= (1.0 - 2e-4 * t) * phi or t < 1e-10:
                break
            t *= 0.5
        z, F = z_new, F_new
        history.append(float(np.max(np.abs(F))))
        it += 1
        if t < 1e-10 and history[-1] > tol:
            raise SolverError("line search failed; the grid may be too coarse "
                              "for the dynamics", history)
    X, P, U = (a.copy() for a in _split(z, N, n, m))
    X[0] = x0
    P[-1] = 0.0
    cost_val = float(trapezoid(cost.eval_nodes(X, U), h))
    return Trajectory(times=grid.times, X=X, u=U, psi=P, cost=cost_val,
                      converged=True, newton_iters=it, history=history)


def dynamics_residual(sys, traj):
    """Per-interval trapezoid defect divided by ``1 + |X_i|``."""
    h = traj.h
    F = traj.X @ sys.A.T + traj.u @ sys.B.T + sys.b
    d = traj.X[1:] - traj.X[:-1] - 0.5 * h * (F[:-1] + F[1:])
    return np.linalg.norm(d, axis=1) / (1.0 + np.linalg.norm(traj.X[:-1], axis=1))


def pmp_residual(sys, cost, traj):
    """Defects of the adjoint equation and of stationarity along ``traj``.

    The adjoint defect uses central differences at interior nodes. The
    stationarity defect ``|B'psi + f_u|`` is taken over nodes and interval
    midpoints; at midpoints ``X`` and ``psi`` come from cubic Hermite
    interpolation with their own derivatives and ``u`` is linear. Both are
    ``O(h^2)``.
    """
    h = traj.h
    A, B, b = sys.A, sys.B, sys.b
    X, U, P = traj.X, traj.u, traj.psi
    if X.shape[0] < 3:
        return 0.0, 0.0
    fx, fu = cost.grad_nodes(X, U)
    dP = -P @ A - fx
    adj = (P[2:] - P[:-2]) / (2.0 * h) - dP[1:-1]
    adjoint_res = float(np.max(np.linalg.norm(adj, axis=1)))
    dX = X @ A.T + U @ B.T + b
    Xm = 0.5 * (X[:-1] + X[1:]) + 0.125 * h * (dX[:-1] - dX[1:])
    Pm = 0.5 * (P[:-1] + P[1:]) + 0.125 * h * (dP[:-1] - dP[1:])
    Um = 0.5 * (U[:-1] + U[1:])
    _, fum = cost.grad_nodes(Xm, Um)
    stat_nodes = np.linalg.norm(P @ B + fu, axis=1)
    stat_mid = np.linalg.norm(Pm @ B + fum, axis=1)
    return adjoint_res, float(max(stat_nodes.max(), stat_mid.max()))


# Riccati reference for quadratic costs

def _riccati_rhs(sys, cost, Rinv):
    A, B, b = sys.A, sys.B, sys.b
    Q, S, q, r = cost.Q, cost.S, cost.q, cost.r

    def rhs(P, p):
        # Derivatives in reversed time tau = T - t.
        K = P @ B + S
        w = B.T @ p + r
        dP = P @ A + A.T @ P + Q - K @ Rinv @ K.T
        dp = A.T @ p + P @ b + q - K @ (Rinv @ w)
        ds = p @ b + cost.c0 - 0.5 * w @ Rinv @ w
        return 0.5 * (dP + dP.T), dp, ds

    return rhs


def riccati_lq_oracle(sys, cost, x, grid):
    """Quadratic-cost reference trajectory from the Riccati equation.

    With ``V(t, x) = 1/2 x'P x + p'x + s`` the terminal data are zero and

        -P' = PA + A'P + Q - (PB + S) R^-1 (B'P + S'),
        -p' = A'p + Pb + q - (PB + S) R^-1 (B'p + r),
        -s' = p'b + c0 - 1/2 (B'p + r)' R^-1 (B'p + r).

    The sweep is integrated backward with RK4 at half the grid step, so the
    forward closed-loop RK4 pass on the grid finds ``P`` at its stage times.
    The cost is ``V(0, x)``.
    """
    if not isinstance(cost, QuadraticCost):
        raise TypeError("the Riccati oracle needs a QuadraticCost")
    n, N, h = sys.n, grid.N, grid.h
    A, B, b = sys.A, sys.B, sys.b
    Rinv = np.linalg.inv(cost.R)
    rhs = _riccati_rhs(sys, cost, Rinv)
    M = 2 * N
    hh = 0.5 * h
    Ps = np.zeros((M + 1, n, n))
    ps = np.zeros((M + 1, n))
    ss = np.zeros(M + 1)
    P, p, s = np.zeros((n, n)), np.zeros(n), 0.0
    Ps[M], ps[M], ss[M] = P, p, s
    for i in range(M, 0, -1):
        k1 = rhs(P, p)
        k2 = rhs(P + 0.5 * hh * k1[0], p + 0.5 * hh * k1[1])
        k3 = rhs(P + 0.5 * hh * k2[0], p + 0.5 * hh * k2[1])
        k4 = rhs(P + hh * k3[0], p + hh * k3[1])
        P = P + hh / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + hh / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        s = s + hh / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (np.all(np.isfinite(P)) and np.isfinite(s)):
            raise SolverError("Riccati sweep overflowed; reduce the step")
        Ps[i - 1], ps[i - 1], ss[i - 1] = P, p, s

    def control(i, xv):
        return -Rinv @ (cost.S.T @ xv + cost.r + B.T @ (Ps[i] @ xv + ps[i]))

    def field_(i, xv):
        return A @ xv + B @ control(i, xv) + b

    x0 = np.asarray(x, dtype=float).reshape(-1)
    X = np.zeros((N + 1, n))
    X[0] = x0
    for j in range(N):
        i = 2 * j
        xv = X[j]
        k1 = field_(i, xv)
        k2 = field_(i + 1, xv + 0.5 * h * k1)
        k3 = field_(i + 1, xv + 0.5 * h * k2)
        k4 = field_(i + 2, xv + h * k3)
        X[j + 1] = xv + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    idx = 2 * np.arange(N + 1)
    psi = np.einsum("tij,tj->ti", Ps[idx], X) + ps[idx]
    U = np.array([control(i, X[j]) for j, i in enumerate(idx)])
    value = float(0.5 * x0 @ Ps[0] @ x0 + ps[0] @ x0 + ss[0])
    return Trajectory(times=grid.times, X=X, u=U.reshape(N + 1, -1), psi=psi,
                      cost=value)


# Stabilizing feedback around a steady pair

def pole_place_feedback(A11, B1, decay, max_attempts=10):
    """Gain ``F`` with every eigenvalue of ``A11 + B1 F`` at ``Re <= -decay``.

    Bass's construction: for ``beta`` with ``-(A11 + beta I)`` Hurwitz, the
    Lyapunov solution ``W`` of
    ``(A11 + beta I) W + W (A11 + beta I)' = 2 B1 B1'`` is positive definite
    and ``F = -B1' W^-1`` moves the spectrum to ``Re = -beta``. The shift is
    doubled until the eigenvalue check passes.

    Raises
    ------
    SynthesisError
        If ``(A11, B1)`` fails the Hautus test or no attempt verifies.
    """
    A11 = np.atleast_2d(np.asarray(A11, dtype=float))
    k = A11.shape[0]
    B1 = np.asarray(B1, dtype=float).reshape(k, -1)
    if decay <= 0:
        raise ValueError("decay must be positive")
    if not hautus_controllable(A11, B1):
        raise SynthesisError("(A11, B1) is not controllable")
    lam = np.linalg.eigvals(A11)
    beta = decay + max(0.0, -float(np.min(lam.real))) + 1.0
    I = np.eye(k)
    for _ in range(max_attempts):
        M = A11 + beta * I
        try:
            W = scipy.linalg.solve_continuous_lyapunov(M, 2.0 * B1 @ B1.T)
            W = 0.5 * (W + W.T)
            F = -B1.T @ np.linalg.inv(W)
        except (np.linalg.LinAlgError, ValueError):
            beta *= 2.0
            continue
        ok_W = np.linalg.eigvalsh(W)[0] > 0
        abscissa = np.max(np.linalg.eigvals(A11 + B1 @ F).real)
        if ok_W and abscissa <= -decay + 1e-9 * (1.0 + abs(decay)):
            return F
        beta *= 2.0
    raise SynthesisError("pole placement could not be verified; the pair is "
                         "close to uncontrollable at this tolerance")


def suboptimal_feedback_run(sys, dec, cost, steady, F, x, grid):
    """Closed loop ``u = F P1'(X - x*) + u*`` simulated with RK4.

    Returns a trajectory without adjoint whose ``cost`` is ``int f`` and
    whose ``witness`` is ``int |X - x*|^2 + |u - u*|^2``, both integrated as
    extra RK4 states.
    """
    A, B, b = sys.A, sys.B, sys.b
    n = sys.n
    xs, us = steady.x_star, steady.u_star
    G = F @ dec.P1.T

    def ctrl(xv):
        return G @ (xv - xs) + us

    def rhs(y):
        xv = y[:n]
        u = ctrl(xv)
        dx = xv - xs
        du = u - us
        return np.concatenate([A @ xv + B @ u + b,
                               [cost.eval(xv, u), dx @ dx + du @ du]])

    N, h = grid.N, grid.h
    Y = np.zeros((N + 1, n + 2))
    Y[0, :n] = np.asarray(x, dtype=float).reshape(-1)
    for j in range(N):
        y = Y[j]
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        Y[j + 1] = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    X = Y[:, :n]
    U = (X - xs) @ G.T + us
    return Trajectory(times=grid.times, X=X, u=U, psi=None,
                      cost=float(Y[-1, n]), witness=float(Y[-1, n + 1]))
