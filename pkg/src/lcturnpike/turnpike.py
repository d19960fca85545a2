"""Measuring turnpike behaviour on computed trajectories.

Deviation series from the steady pair, two-sided exponential envelope fits
``K (exp(-lam t) + exp(-lam (T - t)))``, horizon sweeps of the value gap
``V_T - T V*``, the second-order energy identity between the finite-horizon
cost and the steady value, and the observability inequality constants for
``X' = AX + f``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import AssumptionViolation, FitError, SolverError
from .horizon import Grid, solve_lc, trapezoid

__all__ = ["EnvelopeFit", "SweepRecord", "TurnpikeReport", "deviation_series",
           "fit_envelope", "value_gap_sweep", "lemma_identity_residual",
           "observability_gramian", "observability_constant",
           "observability_inequality_check", "energy_bound_margin",
           "LAMBDA_MIN", "R2_MIN"]

LAMBDA_MIN = 0.01
R2_MIN = 0.9
_MIN_NODES = 20
_PEEL_STEPS = 5


def deviation_series(traj, steady):
    """Euclidean node deviations ``|X - x*|`` and ``|u - u*|``."""
    dev_x = np.linalg.norm(traj.X - steady.x_star, axis=1)
    dev_u = np.linalg.norm(traj.u - steady.u_star, axis=1)
    return dev_x, dev_u


@dataclass(frozen=True)
class EnvelopeFit:
    """Fitted envelope; ``lam`` is ``inf`` when the series sits at the floor."""

    K: float
    lam: float
    r2: float
    lam_left: float | None = None
    lam_right: float | None = None
    sides: tuple = ()

    @property
    def confirmed(self):
        return bool(self.lam > LAMBDA_MIN and self.r2 >= R2_MIN)

    def to_dict(self):
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)
        return {"K": num(self.K), "lambda": num(self.lam), "r2": num(self.r2),
                "lambda_left": num(self.lam_left),
                "lambda_right": num(self.lam_right),
                "sides": list(self.sides), "confirmed": self.confirmed}


def _linfit(t, y):
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(icpt), float(r2)


def fit_envelope(times, dev, boundary_frac=0.1, floor=1e-12):
    """Fit ``log dev`` linearly on both halves of the horizon.

    The left window is ``[w, T/2]`` and the right one ``[T/2, T - w]`` with
    ``w = max(1, boundary_frac T)``. Nodes with ``dev <= floor`` are dropped.
    A half whose nodes mostly sit at the floor has already converged to
    round-off and is skipped; if both do, the series is on the turnpike.
    When the left half decays and the right half rises, each fit is
    repeated a few times on the series minus the other half's exponential.

    The left decay rate is ``-slope``. On the right the magnitude is used,
    so an exit layer (rising slope) and a deviation that is still decaying
    through ``T`` both count as decay at that rate.

    Raises
    ------
    FitError
        If a half has fewer than 20 usable nodes without being at the floor.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(dev, dtype=float)
    T = t[-1] - t[0]
    w = max(1.0, boundary_frac * T)
    mid = t[0] + 0.5 * T
    windows = {"left": (t >= t[0] + w) & (t <= mid),
               "right": (t >= mid) & (t <= t[-1] - w)}
    fits = {}
    masks = {}
    for side, win in windows.items():
        usable = win & (d > floor)
        nu, nw = int(usable.sum()), int(win.sum())
        if nu >= _MIN_NODES:
            fits[side] = _linfit(t[usable], np.log(d[usable]))
            masks[side] = win
        elif nw > 0 and nw - nu >= 0.5 * nw:
            continue
        else:
            raise FitError(f"{side} fit window has {nu} usable nodes; need "
                           f"{_MIN_NODES} (lengthen T or refine the grid)")
    if len(fits) == 2 and fits["left"][0] < 0 < fits["right"][0]:
        # Both layers present: each half still carries the tail of the other
        # layer near T/2, so peel it off and refit.
        for _ in range(_PEEL_STEPS):
            sl, bl, _ = fits["left"]
            sr, br, _ = fits["right"]
            other = {"left": np.exp(br + sr * t), "right": np.exp(bl + sl * t)}
            new = {}
            for side, win in masks.items():
                resid = d - other[side]
                usable = win & (resid > floor)
                if int(usable.sum()) < _MIN_NODES:
                    new = None
                    break
                new[side] = _linfit(t[usable], np.log(resid[usable]))
            if new is None:
                break
            fits = new
    if not fits:
        return EnvelopeFit(K=0.0, lam=math.inf, r2=1.0, sides=())
    lam_l = lam_r = None
    Ks, lams, r2s = [], [], []
    if "left" in fits:
        s, b, r2 = fits["left"]
        lam_l = -s
        Ks.append(math.exp(b))
        lams.append(lam_l)
        r2s.append(r2)
    if "right" in fits:
        s, b, r2 = fits["right"]
        lam_r = abs(s)
        Ks.append(math.exp(b + s * t[-1]) if s > 0 else math.exp(b))
        lams.append(lam_r)
        r2s.append(r2)
    return EnvelopeFit(K=max(Ks), lam=min(lams), r2=min(r2s),
                       lam_left=lam_l, lam_right=lam_r,
                       sides=tuple(sorted(fits)))


@dataclass
class SweepRecord:
    T: float
    N: int
    V_T: float
    gap: float
    midpoint_dev_x: float
    midpoint_dev_u: float
    fit_x: EnvelopeFit | None
    fit_u: EnvelopeFit | None
    integral_metric: float
    fit_error: str | None = None
    traj: object = field(default=None, repr=False)

    @property
    def confirmed(self):
        return bool(self.fit_x is not None and self.fit_u is not None
                    and self.fit_x.confirmed and self.fit_u.confirmed)

    def to_dict(self):
        return {"T": self.T, "N": self.N, "V_T": self.V_T, "gap": self.gap,
                "midpoint_dev_x": self.midpoint_dev_x,
                "midpoint_dev_u": self.midpoint_dev_u,
                "fit_x": None if self.fit_x is None else self.fit_x.to_dict(),
                "fit_u": None if self.fit_u is None else self.fit_u.to_dict(),
                "integral_metric": self.integral_metric,
                "fit_error": self.fit_error,
                "verdict": "confirmed" if self.confirmed else "not confirmed"}


@dataclass
class TurnpikeReport:
    v_star: float
    records: list
    slope: float | None = None
    gap_spread: float | None = None
    feasible: bool = True

    @property
    def verdict(self):
        ok = self.feasible and bool(self.records) and all(
            r.confirmed for r in self.records)
        return "confirmed" if ok else "not confirmed"

    def slope_matches(self, rtol=1e-6):
        if self.slope is None:
            return False
        return abs(self.slope - self.v_star) <= rtol * max(1.0, abs(self.v_star))

    def tail_spread(self, T_min):
        gaps = [r.gap for r in self.records if r.T >= T_min]
        return float(max(gaps) - min(gaps)) if gaps else 0.0

    def to_dict(self):
        return {"v_star": self.v_star, "verdict": self.verdict,
                "feasible": self.feasible, "slope": self.slope,
                "gap_spread": self.gap_spread,
                "records": [r.to_dict() for r in self.records]}


def _mid_value(t, v):
    return float(np.interp(0.5 * t[-1], t, v))


def analyze_trajectory(traj, steady, boundary_frac=0.1, floor=1e-12):
    """Sweep record for a single solved trajectory."""
    t = traj.times
    T = float(t[-1])
    dev_x, dev_u = deviation_series(traj, steady)
    fit_x = fit_u = None
    err = None
    try:
        fit_x = fit_envelope(t, dev_x, boundary_frac, floor)
        fit_u = fit_envelope(t, dev_u, boundary_frac, floor)
    except FitError as exc:
        err = str(exc)
    metric = float(trapezoid(dev_x ** 2 + dev_u ** 2, traj.h)) / T
    return SweepRecord(T=T, N=len(t) - 1, V_T=traj.cost,
                       gap=traj.cost - T * steady.v_star,
                       midpoint_dev_x=_mid_value(t, dev_x),
                       midpoint_dev_u=_mid_value(t, dev_u),
                       fit_x=fit_x, fit_u=fit_u, integral_metric=metric,
                       fit_error=err, traj=traj)


def value_gap_sweep(sys, cost, x, steady, T_list, N_per_unit=200, tol=1e-10,
                    max_iter=50, boundary_frac=0.1, floor=1e-12,
                    feasible=True):
    """Solve on every horizon in ``T_list`` and collect gaps and fits.

    ``slope`` is the least-squares slope of ``V_T`` against ``T``; it should
    reproduce ``V*`` when the gap stays bounded.
    """
    records = []
    for T in sorted(float(v) for v in T_list):
        grid = Grid.per_unit(T, N_per_unit)
        try:
            traj = solve_lc(sys, cost, x, grid, tol, max_iter)
        except SolverError as exc:
            raise SolverError(f"T={T:g}: {exc}", exc.history) from exc
        records.append(analyze_trajectory(traj, steady, boundary_frac, floor))
    report = TurnpikeReport(v_star=steady.v_star, records=records,
                            feasible=feasible)
    if len(records) >= 2:
        Ts = np.array([r.T for r in records])
        Vs = np.array([r.V_T for r in records])
        report.slope = float(np.polyfit(Ts, Vs, 1)[0])
    if records:
        gaps = [r.gap for r in records]
        report.gap_spread = float(max(gaps) - min(gaps))
    return report


def _pi_nodes(cost, x_star, u_star, X, U, order=16):
    """``int_0^1 (1 - theta) hess f(steady + theta d) dtheta`` per node."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    theta = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    out = 0.0
    for th, wt in zip(theta, weights):
        Xt = (1.0 - th) * x_star + th * X
        Ut = (1.0 - th) * u_star + th * U
        out = out + wt * (1.0 - th) * np.asarray(cost.hess_nodes(Xt, Ut))
    return out


def lemma_identity_residual(sys, dec, cost, steady, traj, t1, t2):
    """Relative defect of the second-order energy identity on ``[t1, t2]``.

    With ``d = (X - x*, u - u*)``, ``Y = P'X`` and
    ``Pi = int_0^1 (1 - theta) hess f(steady + theta d) dtheta``,

        int [f - V* + <A22' lam12 + lambda2, Y2 - y2*>]
            = <lam11, Y1(t1) - Y1(t2)> + int <Pi d, d>,

    where ``lambda1 = P1 lam11 + P2 lam12``. Both integrals use the
    trapezoid rule on the nodes in ``[t1, t2]``, which must lie on the grid.
    """
    h = traj.h
    i1 = int(round(t1 / h))
    i2 = int(round(t2 / h))
    if abs(i1 * h - t1) > 1e-9 * max(1.0, t1) or abs(i2 * h - t2) > 1e-9 * max(1.0, t2):
        raise ValueError("t1 and t2 must be grid nodes")
    if not 0 <= i1 < i2 < len(traj.times):
        raise ValueError("need 0 <= t1 < t2 <= T")
    X = traj.X[i1:i2 + 1]
    U = traj.u[i1:i2 + 1]
    xs, us = steady.x_star, steady.u_star
    lam11 = dec.P1.T @ steady.lambda1
    lam12 = dec.P2.T @ steady.lambda1
    Y1 = X @ dec.P1
    Y2 = X @ dec.P2
    y2s = dec.P2.T @ xs
    coef = dec.A22.T @ lam12 + steady.lambda2
    lhs_int = cost.eval_nodes(X, U) - steady.v_star + (Y2 - y2s) @ coef
    D = np.hstack([X - xs, U - us])
    Pi = _pi_nodes(cost, xs, us, X, U)
    quad = np.einsum("ti,tij,tj->t", D, Pi, D)
    lhs = float(trapezoid(lhs_int, h))
    rhs = float(lam11 @ (Y1[0] - Y1[-1]) + trapezoid(quad, h))
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def observability_gramian(A, C, alpha):
    """``int_0^alpha exp(rA') C'C exp(rA) dr`` by a block exponential."""
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A.T
    M[:n, n:] = C.T @ C
    M[n:, n:] = A
    E = scipy.linalg.expm(alpha * M)
    G = E[n:, n:].T @ E[:n, n:]
    return 0.5 * (G + G.T)


def observability_constant(A, C, alpha):
    """Constant ``K`` with ``|X(t)|^2 <= K int_t^{t+alpha} |CX|^2 + |f|^2``.

    Follows the variation-of-constants estimate: with ``Q`` the Gramian and
    ``M = int_0^alpha |C exp(rA)|_F^2 dr = trace Q``,
    ``K = 2 |Q^-1|^2 M max(1, alpha M)``.
    """
    Q = observability_gramian(A, C, alpha)
    M = float(np.trace(Q))
    qinv = 1.0 / np.linalg.eigvalsh(Q)[0]
    return 2.0 * qinv ** 2 * M * max(1.0, alpha * M)


def _observable(A, C, tol=1e-10):
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    O = np.vstack(blocks)
    s = np.linalg.svd(O, compute_uv=False)
    return s.size >= n and s[n - 1] > tol * max(1.0, s[0])


def observability_inequality_check(A, C, alpha, n_trials=50, seed=0,
                                   backward=False, n_modes=4):
    """Largest observed ratio ``|X(t)|^2 / (K int (|CX|^2 + |f|^2))``.

    Each trial draws ``X(t)`` and a forcing ``f`` made of a few random
    sinusoids, integrates ``X' = AX + f`` over ``[t, t + alpha]`` (or
    backward over ``[t - alpha, t]``) together with the running integral,
    and evaluates the ratio. The backward variant uses the constant built
    from ``-A``. A ratio at most 1 means the inequality held.

    Raises
    ------
    AssumptionViolation
        If ``(A, C)`` fails the observability rank test.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not _observable(A, C):
        raise AssumptionViolation("(A, C) is not observable")
    K = observability_constant(-A if backward else A, C, alpha)
    rng = np.random.default_rng(seed)
    worst = 0.0
    t_end = -alpha if backward else alpha
    for trial in range(n_trials):
        x0 = rng.standard_normal(n)
        amp = rng.standard_normal((n_modes, n)) * (0.0 if trial == 0 else 1.0)
        freq = rng.uniform(0.0, 6.0, n_modes)
        phase = rng.uniform(0.0, 2 * np.pi, n_modes)

        def forcing(s):
            return np.sin(freq * s + phase) @ amp

        def rhs(s, y):
            xv = y[:n]
            fv = forcing(s)
            cx = C @ xv
            # The integral runs forward in |s| either way.
            sgn = -1.0 if backward else 1.0
            return np.concatenate([A @ xv + fv, [sgn * (cx @ cx + fv @ fv)]])

        sol = scipy.integrate.solve_ivp(rhs, (0.0, t_end),
                                        np.concatenate([x0, [0.0]]),
                                        method="DOP853", rtol=1e-11,
                                        atol=1e-13)
        integral = float(sol.y[n, -1])
        ratio = float(x0 @ x0) / (K * integral)
        worst = max(worst, ratio)
    return K, worst


def energy_bound_margin(A, times, X, forcing):
    """Slack of ``sup |X|^2 <= |X(t1)|^2 + (2|A| + 1) int (|X|^2 + |f|^2)``.

    ``forcing`` holds the node values of ``f`` in ``X' = AX + f``. Returns
    ``rhs - lhs`` evaluated with the trapezoid rule; nonnegative when the
    energy inequality holds at quadrature accuracy.
    """
    h = times[1] - times[0]
    a = float(np.linalg.norm(A, 2))
    sq = np.sum(X ** 2, axis=1)
    integral = trapezoid(sq + np.sum(forcing ** 2, axis=1), h)
    return float(sq[0] + (2 * a + 1) * integral - np.max(sq))
