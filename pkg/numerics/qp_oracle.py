# numerics/qp_oracle.py
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from tqdm import tqdm

from config import (
    ORACLE_TOL, ORACLE_MAX_ITER, ORACLE_POLISH_MAX_ITER, TOL_KKT, PARALLEL_WORKERS, DEFAULT_SEED
)
from errors import MaxIterExceeded
from numerics.kkt_constraints import ActiveSets

logger = logging.getLogger(__name__)


@dataclass
class QPSolution:
    """Dual solution of the asymmetric-cost linear SVM at one (C+, C-)"""
    alpha: np.ndarray
    beta: np.ndarray
    dual_objective: float
    kkt_residual: float
    iterations: int


@dataclass
class Ambiguous:
    """Samples whose KKT membership is undecidable inside the band"""
    samples: list = field(default_factory=list)


@dataclass(frozen=True)
class GridSpec:
    """n x n grid over [lo, hi] on both cost axes"""
    c_plus_range: tuple
    c_minus_range: tuple
    n: int

    def points(self):
        cps = np.linspace(self.c_plus_range[0], self.c_plus_range[1], self.n)
        cms = np.linspace(self.c_minus_range[0], self.c_minus_range[1], self.n)
        return [(float(cp), float(cm)) for cm in cms for cp in cps]


def dual_objective(data, alpha):
    """1/2 alpha^T X^T X alpha - 1^T alpha"""
    beta = data.X @ alpha
    return float(0.5 * beta @ beta - alpha.sum())


def projected_gradient(gradient, alpha, upper):
    """Projected gradient of the box-constrained dual"""
    pg = gradient.copy()
    at_lower = alpha <= 0.0
    at_upper = alpha >= upper
    pg[at_lower] = np.minimum(gradient[at_lower], 0.0)
    pg[at_upper] = np.maximum(gradient[at_upper], 0.0)
    return pg


def kkt_residual(data, alpha, c_plus, c_minus):
    """Max projected-gradient magnitude at alpha"""
    upper = data.upper_bounds(c_plus, c_minus)
    gradient = data.X.T @ (data.X @ alpha) - 1.0
    return float(np.max(np.abs(projected_gradient(gradient, alpha, upper)), initial=0.0))


def residual_floor(data, upper):
    """Smallest projected-gradient magnitude double precision resolves at these bounds"""
    scale = float(np.max(np.einsum('ij,ij->j', data.X, data.X), initial=0.0))
    eps = float(np.finfo(float).eps)
    return 4.0 * eps * max(1.0, float(np.max(upper, initial=0.0))) * max(1.0, scale) * data.n_samples


def polish_dual(data, alpha, upper, tol, max_iter=ORACLE_POLISH_MAX_ITER):
    """Finish a stalled coordinate descent with bound-constrained quasi-Newton steps"""
    X = data.X

    def objective(a):
        beta = X @ a
        return 0.5 * float(beta @ beta) - float(a.sum()), X.T @ beta - 1.0

    result = minimize(objective, np.clip(alpha, 0.0, upper), jac=True, method='L-BFGS-B',
                      bounds=list(zip(np.zeros(len(upper)), upper)),
                      options={'maxiter': max_iter, 'ftol': 0.0, 'gtol': tol, 'maxcor': 30})
    logger.debug(f"L-BFGS-B polish: {result.nit} iterations, {result.message}")
    return np.clip(result.x, 0.0, upper)


def solve_dual(data, c_plus, c_minus, tol=ORACLE_TOL, max_iter=ORACLE_MAX_ITER, seed=DEFAULT_SEED,
               alpha0=None, polish=True):
    """
    Solve the dual by cyclic coordinate descent with projected updates

    Args:
        data (Dataset): training data
        c_plus (float): cost of positive samples
        c_minus (float): cost of negative samples
        tol (float): target KKT residual, raised to the precision floor at large costs
        max_iter (int): maximum number of epochs
        seed (int): seed of the per-epoch permutation
        alpha0 (np.ndarray, optional): warm start, clipped into the box
        polish (bool): hand an unconverged iterate to L-BFGS-B before giving up

    Returns:
        QPSolution: solution with kkt_residual <= tol
    """
    if c_plus < 0 or c_minus < 0:
        raise ValueError(f"costs must be nonnegative, got ({c_plus}, {c_minus})")
    X = data.X
    n = data.n_samples
    upper = data.upper_bounds(c_plus, c_minus)
    tol = max(tol, residual_floor(data, upper))
    diag = np.einsum('ij,ij->j', X, X)
    alpha = np.zeros(n) if alpha0 is None else np.clip(np.asarray(alpha0, dtype=float), 0.0, upper)
    beta = X @ alpha
    rng = np.random.default_rng(seed)

    residual = float('inf')
    epoch = 0
    for epoch in range(1, max_iter + 1):
        for i in rng.permutation(n):
            g = X[:, i] @ beta - 1.0
            new = min(max(alpha[i] - g / diag[i], 0.0), upper[i])
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                beta += delta * X[:, i]
        # recompute beta to stop drift from accumulating
        beta = X @ alpha
        gradient = X.T @ beta - 1.0
        residual = float(np.max(np.abs(projected_gradient(gradient, alpha, upper)), initial=0.0))
        if residual <= tol:
            break

    if residual > tol and polish:
        polished = polish_dual(data, alpha, upper, tol)
        polished_residual = kkt_residual(data, polished, c_plus, c_minus)
        if polished_residual < residual:
            alpha, residual = polished, polished_residual
            beta = X @ alpha

    solution = QPSolution(alpha, beta, dual_objective(data, alpha), residual, epoch)
    if residual > tol:
        raise MaxIterExceeded(
            f"coordinate descent stopped at residual {residual:.3e} after {epoch} epochs", solution)
    return solution


def kkt_classify(data, sol, c_plus, c_minus, band=TOL_KKT):
    """
    Read the active sets off a dual solution

    Returns:
        ActiveSets or Ambiguous: Ambiguous lists the samples that sit inside
        the band of two sets at once
    """
    upper = data.upper_bounds(c_plus, c_minus)
    scores = data.X.T @ sol.beta
    groups = {'M+': [], 'M-': [], 'I+': [], 'I-': [], 'O': []}
    ambiguous = []
    for i in range(data.n_samples):
        side = '+' if data.is_positive(i) else '-'
        g = scores[i]
        a = sol.alpha[i]
        alpha_band = band * max(1.0, upper[i])
        if abs(g - 1.0) <= band:
            if a <= alpha_band or a >= upper[i] - alpha_band:
                ambiguous.append(i)
            else:
                groups['M' + side].append(i)
        elif g < 1.0 - band and abs(a - upper[i]) <= alpha_band:
            groups['I' + side].append(i)
        elif g > 1.0 + band and a <= alpha_band:
            groups['O'].append(i)
        else:
            ambiguous.append(i)

    if ambiguous:
        return Ambiguous(ambiguous)
    return ActiveSets.build(data.n_plus, groups['M+'], groups['M-'],
                            groups['I+'], groups['I-'], groups['O'])


def probe_point(data, c, band=TOL_KKT, tol=ORACLE_TOL, max_iter=ORACLE_MAX_ITER):
    """Solve and classify at one point; unconverged solves are reported ambiguous"""
    try:
        sol = solve_dual(data, c[0], c[1], tol, max_iter)
    except MaxIterExceeded as e:
        logger.warning(f"Oracle did not converge at {c}: {str(e)}")
        return Ambiguous(list(range(data.n_samples)))
    return kkt_classify(data, sol, c[0], c[1], band)


def grid_probe(data, grid_spec, band=TOL_KKT, workers=PARALLEL_WORKERS, progress=False):
    """
    Active sets on a grid of cost pairs (validation oracle)

    Returns:
        dict: (C+, C-) -> ActiveSets or Ambiguous
    """
    points = grid_spec.points()
    logger.info(f"Probing {len(points)} grid points with {workers} workers")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(tqdm(pool.map(lambda c: probe_point(data, c, band), points),
                            total=len(points), disable=not progress, desc='grid probe'))
    sampled = dict(zip(points, results))
    n_ambiguous = sum(isinstance(r, Ambiguous) for r in results)
    if n_ambiguous:
        logger.info(f"{n_ambiguous} grid points are ambiguous")
    return sampled


def distinct_regions(sampled):
    """Canonical keys of the non-ambiguous grid results"""
    return {r.canonical_key for r in sampled.values() if isinstance(r, ActiveSets)}
