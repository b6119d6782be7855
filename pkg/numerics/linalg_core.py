# numerics/linalg_core.py
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from config import TOL_RANK
from errors import SingularGram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginFactorization:
    """
    Thin QR factorization X_M = Q R of the margin columns.

    The Gram matrix X_M^T X_M equals R^T R, so solves never form it.
    """
    margin_indices: tuple
    q: np.ndarray
    r: np.ndarray
    condition_estimate: float

    @property
    def size(self):
        return len(self.margin_indices)

    def gram(self):
        return self.r.T @ self.r


def gram_factorize(X_M, margin_indices=None, tol_rank=TOL_RANK):
    """
    Factorize the Gram matrix of the margin columns

    Args:
        X_M (np.ndarray): d x m matrix of margin samples
        margin_indices (sequence, optional): sample index of each column
        tol_rank (float): relative singular value threshold

    Returns:
        MarginFactorization: factorization usable by gram_solve
    """
    X_M = np.atleast_2d(np.asarray(X_M, dtype=float))
    d, m = X_M.shape
    if margin_indices is None:
        margin_indices = tuple(range(m))
    if m < 1:
        raise ValueError("margin set must be nonempty to factorize")
    if m > d:
        raise SingularGram(f"{m} margin samples exceed dimension {d}")

    q, r = sla.qr(X_M, mode='economic')
    sigma = sla.svdvals(r)
    if sigma[0] == 0.0 or sigma[-1] <= tol_rank * sigma[0]:
        raise SingularGram(
            f"margin Gram is rank deficient for samples {list(margin_indices)} "
            f"(sigma_min/sigma_max = {sigma[-1] / sigma[0] if sigma[0] else 0.0:.3e})"
        )
    condition = float((sigma[0] / sigma[-1]) ** 2)
    return MarginFactorization(tuple(int(i) for i in margin_indices), q, r, condition)


def gram_solve(f, v):
    """Solve (X_M^T X_M) z = v through the triangular factor"""
    v = np.asarray(v, dtype=float)
    y = sla.solve_triangular(f.r, v, trans='T', lower=False)
    return sla.solve_triangular(f.r, y, lower=False)


def project_residual_dot(x, f, X_M, s):
    """
    x^T P_perp s with P_perp = I - X_M X_M^+

    With an empty margin set (f is None) the projector is the identity.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if f is None or f.size == 0:
        return float(x @ s)
    return float(x @ s - (X_M.T @ x) @ gram_solve(f, X_M.T @ s))


def project_residual(f, S):
    """P_perp applied to the columns of S (uses the orthonormal factor)"""
    S = np.asarray(S, dtype=float)
    if f is None or f.size == 0:
        return S.copy()
    return S - f.q @ (f.q.T @ S)


def rank_of(A, tol_rel=TOL_RANK):
    """
    Numerical rank: number of singular values above tol_rel * sigma_max

    Args:
        A (np.ndarray): n x k matrix
        tol_rel (float): relative threshold

    Returns:
        int: numerical rank
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    sigma = sla.svdvals(A)
    if sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > tol_rel * sigma[0]))
