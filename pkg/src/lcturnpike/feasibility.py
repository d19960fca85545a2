"""Feasible initial states for the partial turnpike.

For the uncontrollable block ``A22`` two subspaces of R^{n-k} matter: the
real stable invariant subspace (all eigenvalues with negative real part) and
the kernel. An initial state ``x`` is feasible when ``P2'x + c`` splits into
a stable part and a kernel part, where ``A22 c = P2'b``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AssumptionViolation

__all__ = ["FeasibilitySpaces", "FeasibilityCertificate", "solve_offset_c",
           "stable_subspace_basis", "kernel_basis", "build_spaces", "certify"]


def solve_offset_c(A22, rhs, tol_a1=1e-9):
    """Minimum-norm solution of ``A22 c = rhs``.

    Raises
    ------
    AssumptionViolation
        When ``rhs`` is not in the range of ``A22`` (to ``tol_a1`` relative),
        i.e. ``b`` is not in ``im(A, B)`` and no steady pair can exist.
    """
    A22 = np.asarray(A22, dtype=float)
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    if rhs.size == 0:
        return np.zeros(0)
    c = scipy.linalg.lstsq(A22, rhs, cond=1e-12)[0]
    res = np.linalg.norm(A22 @ c - rhs)
    if res > tol_a1 * (1.0 + np.linalg.norm(rhs)):
        raise AssumptionViolation(
            f"b is not in im(A, B): |A22 c - P2'b| = {res:.3e}")
    return c


def stable_subspace_basis(A22, stab_tol=1e-9):
    """Orthonormal basis of the invariant subspace for ``Re(lam) < -stab_tol``.

    Uses an ordered real Schur form. Returns ``(V1, marginal)``; ``marginal``
    is True when some nonzero eigenvalue has ``|Re(lam)| <= stab_tol``, i.e.
    sits on (or numerically on) the imaginary axis.
    """
    A22 = np.asarray(A22, dtype=float)
    d = A22.shape[0] if A22.size else 0
    if d == 0:
        return np.zeros((0, 0)), False
    _, Z, sdim = scipy.linalg.schur(A22, output="real",
                                    sort=lambda re, im: re < -stab_tol)
    lam = np.linalg.eigvals(A22)
    scale = 1.0 + np.linalg.norm(A22, 2)
    marginal = bool(np.any((np.abs(lam.real) <= stab_tol)
                           & (np.abs(lam) > 1e-10 * scale)))
    return Z[:, :sdim], marginal


def kernel_basis(A22, rank_tol=None):
    """Orthonormal basis of the numerical kernel of ``A22`` from its SVD.

    Singular values ``<= rank_tol`` (default ``1e-10 (1 + |A22|)``) are
    treated as zero.
    """
    A22 = np.asarray(A22, dtype=float)
    d = A22.shape[0] if A22.size else 0
    if d == 0:
        return np.zeros((0, 0))
    _, s, Vh = np.linalg.svd(A22)
    if rank_tol is None:
        rank_tol = 1e-10 * (1.0 + s[0])
    r = int(np.sum(s > rank_tol))
    return Vh[r:].T.copy()


@dataclass(frozen=True)
class FeasibilitySpaces:
    """Offset ``c`` and the bases ``V1`` (stable) and ``V2`` (kernel)."""

    c: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    marginal: bool = False

    @property
    def d1(self):
        return self.V1.shape[1] if self.V1.ndim == 2 else 0

    @property
    def d2(self):
        return self.V2.shape[1] if self.V2.ndim == 2 else 0

    @property
    def dim(self):
        return self.c.size


def build_spaces(dec, b, tol_a1=1e-9, stab_tol=1e-9, rank_tol=None):
    """Checks ``b in im(A, B)`` and assembles :class:`FeasibilitySpaces`."""
    rhs = dec.P2.T @ np.asarray(b, dtype=float)
    c = solve_offset_c(dec.A22, rhs, tol_a1)
    d = dec.A22.shape[0]
    if d == 0:
        return FeasibilitySpaces(c=np.zeros(0), V1=np.zeros((0, 0)),
                                 V2=np.zeros((0, 0)))
    V1, marginal = stable_subspace_basis(dec.A22, stab_tol)
    V2 = kernel_basis(dec.A22, rank_tol)
    return FeasibilitySpaces(c=c, V1=V1.reshape(d, -1), V2=V2.reshape(d, -1),
                             marginal=marginal)


@dataclass(frozen=True)
class FeasibilityCertificate:
    """Split of ``w = P2'x + c`` along the stable and kernel subspaces.

    ``q1`` and ``q2`` are the oblique projections of ``w``; ``residual`` is
    the part of ``w`` outside their direct sum.
    """

    feasible: bool
    w: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    residual: float
    d1: int
    d2: int
    marginal_spectrum_flag: bool = False

    def to_dict(self):
        return {"feasible": self.feasible, "residual": self.residual,
                "d1": self.d1, "d2": self.d2, "q1": self.q1.tolist(),
                "q2": self.q2.tolist(), "w": self.w.tolist(),
                "marginal_spectrum_flag": self.marginal_spectrum_flag}


def certify(spaces, P2, x, tol_feas=1e-9):
    """Decide whether ``x`` is a feasible initial state.

    Infeasibility is reported through the certificate, not raised.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    w = P2.T @ x + spaces.c
    d1, d2 = spaces.d1, spaces.d2
    if w.size == 0:
        return FeasibilityCertificate(True, w, w.copy(), w.copy(), 0.0, 0, 0,
                                      spaces.marginal)
    if d1 + d2 == 0:
        zero = np.zeros_like(w)
        res = float(np.linalg.norm(w))
        return FeasibilityCertificate(bool(res <= tol_feas * (1.0 + res)), w,
                                      zero, zero.copy(), res, 0, 0,
                                      spaces.marginal)
    M = np.hstack([spaces.V1, spaces.V2])
    xi = scipy.linalg.lstsq(M, w)[0]
    q1 = spaces.V1 @ xi[:d1]
    q2 = spaces.V2 @ xi[d1:]
    res = float(np.linalg.norm(w - q1 - q2))
    feasible = bool(res <= tol_feas * (1.0 + np.linalg.norm(w)))
    return FeasibilityCertificate(feasible, w, q1, q2, res, d1, d2,
                                  spaces.marginal)
