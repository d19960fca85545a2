"""Controlled linear system and convex stage costs.

The state equation is ``X' = A X + B u + b`` and the running cost is a
strongly convex ``f(x, u)``. Two cost families are provided, both with
analytic derivatives:

* :class:`QuadraticCost`, ``f = 1/2 x'Qx + x'Su + 1/2 u'Ru + q'x + r'u + c0``
* :class:`PerturbedQuadraticCost`, a quadratic plus weighted ``log cosh``
  terms on individual coordinates.

Besides single-point ``eval``/``grad``/``hess`` each family has ``*_nodes``
variants that act on stacked samples ``X`` (N, n) and ``U`` (N, m); the
trajectory solvers use those.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SolverError

__all__ = [
    "LinearSystem", "QuadraticCost", "PerturbedQuadraticCost",
    "logcosh", "cost_eval", "cost_grad", "cost_hess", "check_a2", "check_a3",
]


def _matrix(value, name, shape=None):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a matrix", field=name)
    if shape is not None and arr.shape != shape:
        raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}",
                          field=name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} has non-finite entries", field=name)
    return arr


def _vector(value, name, size):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.size != size:
        raise ConfigError(f"{name} has length {arr.size}, expected {size}",
                          field=name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} has non-finite entries", field=name)
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """The triple (A, B, b) of ``X' = A X + B u + b``."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise ConfigError(f"A must be square and nonempty, got {A.shape}",
                              field="A")
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        B = _matrix(B, "B")
        if B.shape[0] != n or B.shape[1] < 1:
            raise ConfigError(f"B has shape {B.shape}, expected ({n}, m>=1)",
                              field="B")
        b = _vector(self.b, "b", n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def rhs(self, x, u):
        return self.A @ x + self.B @ u + self.b


def logcosh(s):
    """``log(cosh(s))`` without overflow for large ``|s|``.

    Small arguments go through ``cosh(s) - 1 = 2 sinh(s/2)^2`` to keep full
    relative accuracy near 0.
    """
    a = np.abs(np.asarray(s, dtype=float))
    small = a < 1.0
    big = a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)
    near = np.log1p(2.0 * np.sinh(0.5 * np.where(small, a, 0.0)) ** 2)
    return np.where(small, near, big)


def _logcosh_d2(s):
    return 1.0 / np.cosh(np.clip(s, -350.0, 350.0)) ** 2


class QuadraticCost:
    """``f(x,u) = 1/2 x'Qx + x'Su + 1/2 u'Ru + q'x + r'u + c0``.

    ``delta`` is the declared strong-convexity modulus. When omitted it is
    taken as the smallest eigenvalue of the stacked Hessian, so a nonconvex
    ``Q`` yields a nonpositive ``delta`` that :func:`check_a2` rejects.
    """

    family = "quadratic"

    def __init__(self, Q, R, S=None, q=None, r=None, c0=0.0, delta=None):
        Q = _matrix(Q, "cost.Q")
        n = Q.shape[0]
        R = _matrix(R, "cost.R")
        m = R.shape[0]
        _matrix(Q, "cost.Q", (n, n))
        _matrix(R, "cost.R", (m, m))
        S = np.zeros((n, m)) if S is None else _matrix(S, "cost.S", (n, m))
        self.Q = 0.5 * (Q + Q.T)
        self.R = 0.5 * (R + R.T)
        self.S = S
        self.q = np.zeros(n) if q is None else _vector(q, "cost.q", n)
        self.r = np.zeros(m) if r is None else _vector(r, "cost.r", m)
        self.c0 = float(c0)
        self.H = np.block([[self.Q, self.S], [self.S.T, self.R]])
        self.min_eig = float(np.linalg.eigvalsh(self.H)[0])
        self.delta = self.min_eig if delta is None else float(delta)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]

    def eval(self, x, u):
        return float(0.5 * x @ self.Q @ x + x @ self.S @ u
                     + 0.5 * u @ self.R @ u + self.q @ x + self.r @ u + self.c0)

    def grad(self, x, u):
        return np.concatenate([self.Q @ x + self.S @ u + self.q,
                               self.S.T @ x + self.R @ u + self.r])

    def hess(self, x, u):
        return self.H.copy()

    def eval_nodes(self, X, U):
        return (0.5 * np.einsum("ij,jk,ik->i", X, self.Q, X)
                + np.einsum("ij,jk,ik->i", X, self.S, U)
                + 0.5 * np.einsum("ij,jk,ik->i", U, self.R, U)
                + X @ self.q + U @ self.r + self.c0)

    def grad_nodes(self, X, U):
        fx = X @ self.Q + U @ self.S.T + self.q
        fu = X @ self.S + U @ self.R + self.r
        return fx, fu

    def hess_nodes(self, X, U):
        return np.broadcast_to(self.H, (X.shape[0],) + self.H.shape)

    def gamma_bound(self, r):
        # f_xu = S is constant and f_uu = R, so the bound holds for every r.
        return float(np.linalg.norm(self.S) / np.linalg.eigvalsh(self.R)[0])

    def to_dict(self):
        return {"family": self.family, "Q": self.Q.tolist(),
                "S": self.S.tolist(), "R": self.R.tolist(),
                "q": self.q.tolist(), "r": self.r.tolist(), "c0": self.c0,
                "delta": self.delta}


class PerturbedQuadraticCost:
    """Quadratic base plus ``sum alpha_i logcosh(x_i) + sum beta_j logcosh(u_j)``.

    ``logcosh''`` lies in (0, 1], so the Hessian dominates the base Hessian
    and the base modulus ``delta`` is inherited. The cross block is still
    ``S`` and ``f_uu >= R``, hence the same ``gamma`` bound as the base.
    """

    family = "perturbed_quadratic"

    def __init__(self, base, alpha=None, beta=None):
        if not isinstance(base, QuadraticCost):
            raise ConfigError("base must be a QuadraticCost", field="cost.base")
        self.base = base
        n, m = base.n, base.m
        self.alpha = np.zeros(n) if alpha is None else _vector(alpha, "cost.alpha", n)
        self.beta = np.zeros(m) if beta is None else _vector(beta, "cost.beta", m)
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ConfigError("alpha and beta must be nonnegative",
                              field="cost.alpha")
        self.delta = base.delta

    @property
    def n(self):
        return self.base.n

    @property
    def m(self):
        return self.base.m

    def eval(self, x, u):
        return (self.base.eval(x, u) + float(self.alpha @ logcosh(x))
                + float(self.beta @ logcosh(u)))

    def grad(self, x, u):
        g = self.base.grad(x, u)
        g[:self.n] += self.alpha * np.tanh(x)
        g[self.n:] += self.beta * np.tanh(u)
        return g

    def hess(self, x, u):
        H = self.base.hess(x, u)
        d = np.concatenate([self.alpha * _logcosh_d2(x),
                            self.beta * _logcosh_d2(u)])
        H[np.diag_indices_from(H)] += d
        return H

    def eval_nodes(self, X, U):
        return (self.base.eval_nodes(X, U) + logcosh(X) @ self.alpha
                + logcosh(U) @ self.beta)

    def grad_nodes(self, X, U):
        fx, fu = self.base.grad_nodes(X, U)
        return fx + self.alpha * np.tanh(X), fu + self.beta * np.tanh(U)

    def hess_nodes(self, X, U):
        H = np.array(self.base.hess_nodes(X, U))
        d = np.hstack([self.alpha * _logcosh_d2(X), self.beta * _logcosh_d2(U)])
        idx = np.arange(H.shape[1])
        H[:, idx, idx] += d
        return H

    def gamma_bound(self, r):
        return self.base.gamma_bound(r)

    def to_dict(self):
        return {"family": self.family, "base": self.base.to_dict(),
                "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


def _point(cost, x, u):
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.size != cost.n or u.size != cost.m:
        raise ConfigError(f"point dimensions ({x.size}, {u.size}) do not match "
                          f"cost dimensions ({cost.n}, {cost.m})")
    return x, u


def cost_eval(cost, x, u):
    return cost.eval(*_point(cost, x, u))


def cost_grad(cost, x, u):
    return cost.grad(*_point(cost, x, u))


def cost_hess(cost, x, u):
    return cost.hess(*_point(cost, x, u))


def check_a2(cost, sample_box=(-2.0, 2.0), n_samples=200, seed=0):
    """Sampled test of ``hess f >= delta I``.

    Returns ``(holds, min_eig)`` where ``min_eig`` is the smallest Hessian
    eigenvalue seen over ``n_samples`` uniform points of the box.
    """
    lo, hi = sample_box
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(max(int(n_samples), 1), cost.n + cost.m))
    H = cost.hess_nodes(pts[:, :cost.n], pts[:, cost.n:])
    min_eig = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
    return bool(min_eig >= cost.delta - 1e-10 and cost.delta > 0), min_eig


def check_a3(cost, r, u_grid_radius=1e3, n_samples=400, seed=0, gamma=None):
    """Sampled test of ``|f_xu f_uu^{-1}| <= gamma(r)`` on ``|x| <= r``.

    Controls are drawn on spheres of radii spread geometrically up to
    ``u_grid_radius`` (plus the origin) so that growth in ``|u|`` would show.
    Returns ``(holds, sup_ratio)`` with the Frobenius norm.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    n, m = cost.n, cost.m
    rng = np.random.default_rng(seed)
    ns = max(int(n_samples), 1)
    dx = rng.standard_normal((ns, n))
    dx /= np.linalg.norm(dx, axis=1, keepdims=True)
    X = dx * (r * rng.uniform(0.0, 1.0, size=(ns, 1)) ** (1.0 / n))
    du = rng.standard_normal((ns, m))
    du /= np.linalg.norm(du, axis=1, keepdims=True)
    radii = np.concatenate([[0.0], np.geomspace(1e-2, u_grid_radius, 31)])
    U = du * radii[np.arange(ns) % radii.size][:, None]
    H = cost.hess_nodes(X, U)
    fxu = H[:, :n, n:]
    fuu = H[:, n:, n:]
    try:
        M = np.linalg.solve(np.transpose(fuu, (0, 2, 1)),
                            np.transpose(fxu, (0, 2, 1)))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"f_uu singular at a sample point: {exc}") from exc
    sup_ratio = float(np.max(np.linalg.norm(M, axis=(1, 2))))
    bound = cost.gamma_bound(r) if gamma is None else float(gamma(r))
    return bool(sup_ratio <= bound + 1e-10), sup_ratio
