#!/usr/bin/env python
# test_linalg_core.py - Test the margin Gram factorization and projector kernels

import sys
import logging

import numpy as np
from numpy.testing import assert_allclose

from errors import SingularGram
from numerics.linalg_core import gram_factorize, gram_solve, project_residual, project_residual_dot, rank_of

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_linalg_core')


def _margin_matrix(d=5, m=3, seed=0):
    return np.random.default_rng(seed).normal(size=(d, m))


def test_factorization_reproduces_gram():
    X_M = _margin_matrix()
    f = gram_factorize(X_M, (4, 7, 9))
    gram = X_M.T @ X_M
    assert f.margin_indices == (4, 7, 9)
    assert np.linalg.norm(f.gram() - gram) <= 1e-10 * np.linalg.norm(gram)
    assert f.condition_estimate >= 1.0


def test_gram_solve_matches_dense_solve():
    X_M = _margin_matrix(seed=1)
    f = gram_factorize(X_M)
    v = np.array([1.0, -2.0, 0.5])
    assert_allclose(gram_solve(f, v), np.linalg.solve(X_M.T @ X_M, v), rtol=1e-10)


def test_more_margin_samples_than_dimension_is_singular():
    try:
        gram_factorize(_margin_matrix(d=2, m=3))
    except SingularGram:
        return
    raise AssertionError("expected SingularGram")


def test_duplicated_column_is_singular():
    X_M = _margin_matrix(d=4, m=2)
    X_M = np.column_stack([X_M[:, 0], X_M[:, 0]])
    try:
        gram_factorize(X_M)
    except SingularGram:
        return
    raise AssertionError("expected SingularGram")


def test_projector_against_explicit_formula():
    X_M = _margin_matrix(d=6, m=2, seed=2)
    f = gram_factorize(X_M)
    P = np.eye(6) - X_M @ np.linalg.inv(X_M.T @ X_M) @ X_M.T
    rng = np.random.default_rng(3)
    x, s = rng.normal(size=6), rng.normal(size=6)
    assert abs(project_residual_dot(x, f, X_M, s) - x @ P @ s) <= 1e-10
    S = rng.normal(size=(6, 2))
    assert_allclose(project_residual(f, S), P @ S, atol=1e-12)


def test_empty_margin_projector_is_identity():
    x, s = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    assert project_residual_dot(x, None, None, s) == 1.0


def test_rank_of():
    assert rank_of(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1
    assert rank_of(np.eye(3)) == 3
    assert rank_of(np.zeros((2, 2))) == 0


def test_rank_is_invariant_under_scaling():
    A = _margin_matrix(d=5, m=3, seed=4)
    A = np.column_stack([A, A[:, 0] + 2.0 * A[:, 1]])
    for scale in (1e-8, 1.0, 1e8):
        assert rank_of(scale * A) == 3
        assert rank_of(scale * np.eye(3)) == 3


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All linalg tests passed")
