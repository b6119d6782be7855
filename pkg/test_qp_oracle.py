#!/usr/bin/env python
# test_qp_oracle.py - Test the coordinate-descent dual solver and KKT classification

import sys
import logging

import numpy as np
from numpy.testing import assert_allclose

from errors import MaxIterExceeded
from numerics.kkt_constraints import ActiveSets
from numerics.qp_oracle import (
    Ambiguous, GridSpec, distinct_regions, grid_probe, kkt_classify, kkt_residual, residual_floor, solve_dual
)
from storage.dataset_loader import Dataset, make_gaussian_dataset

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_qp_oracle')

B = 0.01


def single_point():
    return Dataset(X=np.array([[2.0], [B]]), n_plus=1, B=B, feature_dim_raw=1)


def two_points(b_const=1.0):
    """x+ = 1, x- = -1: alpha is (a, a) with a = min(C, 1/2) on the diagonal"""
    return Dataset.from_arrays([[1.0], [-1.0]], [1, -1], b_const)


def test_single_point_closed_form():
    data = single_point()
    norm2 = 4.0 + B * B
    for c_plus in (0.05, 0.2, 1.0 / norm2, 3.0):
        solution = solve_dual(data, c_plus, 1.0)
        assert abs(solution.alpha[0] - min(c_plus, 1.0 / norm2)) <= 1e-9


def test_two_points_on_the_diagonal():
    data = two_points()
    for c, expected in ((0.25, 0.25), (0.5, 0.5), (2.0, 0.5)):
        solution = solve_dual(data, c, c)
        assert_allclose(solution.alpha, [expected, expected], atol=1e-9)
        assert_allclose(solution.beta, [2.0 * expected, 0.0], atol=1e-9)
        assert solution.kkt_residual <= 1e-10
        assert kkt_residual(data, solution.alpha, c, c) <= 1e-10


def test_dual_objective_value():
    data = two_points()
    solution = solve_dual(data, 2.0, 2.0)
    # beta = (1, 0): 1/2 * 1 - (0.5 + 0.5)
    assert abs(solution.dual_objective + 0.5) <= 1e-9


def test_classify_inside_and_on_the_margin():
    data = two_points()
    low = kkt_classify(data, solve_dual(data, 0.25, 0.25), 0.25, 0.25)
    assert low == ActiveSets.origin(2, 1)
    high = kkt_classify(data, solve_dual(data, 2.0, 2.0), 2.0, 2.0)
    assert high == ActiveSets.build(1, m_plus=[0], m_minus=[1])


def test_classify_on_a_breakpoint_is_ambiguous():
    data = two_points()
    result = kkt_classify(data, solve_dual(data, 0.5, 0.5), 0.5, 0.5)
    assert isinstance(result, Ambiguous)
    assert result.samples == [0, 1]


def test_negative_costs_are_rejected():
    try:
        solve_dual(two_points(), -1.0, 1.0)
    except ValueError:
        return
    raise AssertionError("expected ValueError")


def test_iteration_cap():
    try:
        solve_dual(two_points(B), 1.0, 1.0, tol=1e-14, max_iter=1, polish=False)
    except MaxIterExceeded as e:
        assert e.solution is not None
        assert e.solution.iterations == 1
        return
    raise AssertionError("expected MaxIterExceeded")


def test_grid_probe_finds_origin_and_margin_regions():
    data = two_points()
    sampled = grid_probe(data, GridSpec((0.1, 2.0), (0.1, 2.0), 3), workers=2)
    assert len(sampled) == 9
    regions = distinct_regions(sampled)
    assert ActiveSets.origin(2, 1).canonical_key in regions
    assert ActiveSets.build(1, m_plus=[0], m_minus=[1]).canonical_key in regions


def test_warm_start_reaches_the_same_solution():
    data = make_gaussian_dataset(2, 5, 10, seed=3)
    cold = solve_dual(data, 1.0, 2.0)
    warm = solve_dual(data, 1.0, 2.0, alpha0=solve_dual(data, 0.9, 1.8).alpha)
    assert_allclose(warm.beta, cold.beta, atol=1e-7)
    outside_box = solve_dual(data, 1.0, 2.0, alpha0=np.full(data.n_samples, 10.0))
    assert_allclose(outside_box.beta, cold.beta, atol=1e-7)


def test_quasi_newton_finishes_a_capped_solve():
    # nearly parallel columns: one epoch of coordinate descent is far from done
    solution = solve_dual(two_points(B), 1.0, 1.0, tol=1e-9, max_iter=1)
    assert solution.kkt_residual <= 1e-9
    assert_allclose(solution.alpha, [0.5, 0.5], atol=1e-4)


def test_residual_floor_grows_with_the_costs():
    data = two_points()
    small = residual_floor(data, data.upper_bounds(1.0, 1.0))
    large = residual_floor(data, data.upper_bounds(1e6, 1.0))
    assert small > 0.0
    assert abs(large / small - 1e6) <= 1e-6 * 1e6


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All oracle tests passed")
