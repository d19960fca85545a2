"""Controllable subspace and the orthogonal Kalman decomposition of (A, B)."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError

__all__ = ["KalmanDecomposition", "controllability_matrix", "decompose",
           "hautus_controllable", "normalize_signs"]

_EPS = np.finfo(float).eps


def controllability_matrix(sys):
    """Horizontal stack ``[B, AB, ..., A^{n-1} B]``."""
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def normalize_signs(V):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


@dataclass(frozen=True)
class KalmanDecomposition:
    """``P = (P1, P2)`` orthogonal with ``P'AP = [[A11, A12], [0, A22]]``
    and ``P'B = [B1; 0]``.

    ``singular_values`` are those of the (normalized) Krylov matrix used to
    reveal the rank ``k``; ``near_threshold`` flags a singular value within
    one decade of ``rank_tol`` on either side.
    """

    P1: np.ndarray
    P2: np.ndarray
    A11: np.ndarray
    A12: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    k: int
    singular_values: np.ndarray
    rank_tol: float
    near_threshold: bool = False

    @property
    def n(self):
        return self.P1.shape[0]

    @property
    def P(self):
        return np.hstack([self.P1, self.P2])

    def to_dict(self):
        return {
            "k": self.k, "n": self.n,
            "P1": self.P1.tolist(), "P2": self.P2.tolist(),
            "A11": self.A11.tolist(), "A12": self.A12.tolist(),
            "A22": self.A22.tolist(), "B1": self.B1.tolist(),
            "singular_values": self.singular_values.tolist(),
            "rank_tol": self.rank_tol, "near_threshold": self.near_threshold,
        }


def _krylov_normalized(sys):
    # Same column space as controllability_matrix, without the growth of A^j.
    a = np.linalg.norm(sys.A, 2)
    bn = np.linalg.norm(sys.B, 2)
    As = sys.A / a if a > 0 else sys.A
    blocks = [sys.B / bn if bn > 0 else sys.B]
    for _ in range(sys.n - 1):
        blocks.append(As @ blocks[-1])
    return np.hstack(blocks)


def decompose(sys, rank_tol=None):
    """Kalman controllable decomposition via the SVD of the Krylov matrix.

    Parameters
    ----------
    sys : LinearSystem
    rank_tol : float, optional
        Absolute threshold on the singular values of the normalized Krylov
        matrix. Default ``100 n m eps sigma_max``.

    Returns
    -------
    KalmanDecomposition

    Raises
    ------
    DecompositionError
        If the computed basis fails to annihilate ``P2'AP1`` or ``P2'B``.
    """
    n, m = sys.n, sys.m
    C = _krylov_normalized(sys)
    U, s, _ = np.linalg.svd(C, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if rank_tol is None:
        rank_tol = 100.0 * n * m * _EPS * smax
    if rank_tol <= 0:
        rank_tol = _EPS
    k = int(np.sum(s > rank_tol))
    near = bool(np.any((s > 0.1 * rank_tol) & (s < 10.0 * rank_tol)))
    if near:
        warnings.warn("controllability singular value close to the rank "
                      "threshold; the computed rank may be fragile",
                      RuntimeWarning, stacklevel=2)
    P1 = normalize_signs(U[:, :k])
    P2 = normalize_signs(U[:, k:])
    A, B = sys.A, sys.B
    tol_block = 1e-10 * (1.0 + np.linalg.norm(A) + np.linalg.norm(B))
    e21 = np.linalg.norm(P2.T @ A @ P1)
    e2b = np.linalg.norm(P2.T @ B)
    if e21 > tol_block or e2b > tol_block:
        raise DecompositionError(
            f"block structure violated (|P2'AP1|={e21:.3e}, |P2'B|={e2b:.3e}, "
            f"tol={tol_block:.3e}); rank_tol={rank_tol:.3e} may sit inside a "
            "singular-value cluster")
    return KalmanDecomposition(
        P1=P1, P2=P2,
        A11=P1.T @ A @ P1, A12=P1.T @ A @ P2, A22=P2.T @ A @ P2, B1=P1.T @ B,
        k=k, singular_values=s, rank_tol=float(rank_tol), near_threshold=near,
    )


def hautus_controllable(A11, B1, tol=1e-10):
    """PBH test: ``[A11 - lam I, B1]`` keeps full row rank at every eigenvalue.

    A pair with ``k = 0`` is controllable by convention.
    """
    A11 = np.atleast_2d(np.asarray(A11, dtype=float))
    k = A11.shape[0] if A11.size else 0
    if k == 0:
        return True
    B1 = np.asarray(B1, dtype=float).reshape(k, -1)
    scale = 1.0 + np.linalg.norm(A11, 2) + np.linalg.norm(B1, 2)
    for lam in np.linalg.eigvals(A11):
        M = np.hstack([A11 - lam * np.eye(k), B1.astype(complex)])
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        if smin <= tol * scale:
            return False
    return True
