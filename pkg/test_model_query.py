#!/usr/bin/env python
# test_model_query.py - Test point location, model evaluation and prediction on an explored path

import sys
import logging

import numpy as np
from numpy.testing import assert_allclose

from errors import BoundaryPoint, DimensionMismatch, UnexploredPoint
from geometry.polytope2d import HalfPlane, intersect_halfplanes
from numerics.kkt_constraints import (
    AXIS_CONSTRAINTS, ActiveSets, AffineConstraint, AffineFunctional, ConstraintFamily, Event, alpha_at
)
from numerics.qp_oracle import Ambiguous, GridSpec, distinct_regions, grid_probe, kkt_classify, solve_dual
from regpath.explorer import ExploreConfig, run
from regpath.model_query import (
    Where, _diagonal_interval, alpha_at_vertices, diagonal_crossings, evaluate, evaluate_in, locate_facet, predict
)
from regpath.path_graph import facet_mean
from storage.dataset_loader import Dataset, make_gaussian_dataset

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_model_query')


def two_points():
    return Dataset.from_arrays([[1.0], [-1.0]], [1, -1], 1.0)


def explored():
    data = two_points()
    return data, run(data, ExploreConfig(parallel_facets=False))


def test_locate_points():
    _, graph = explored()
    origin_id = graph.key_index[ActiveSets.origin(2, 1).canonical_key]
    inside = locate_facet(graph, (0.1, 0.1))
    assert inside.where is Where.FACET and inside.facet_id == origin_id
    corner = locate_facet(graph, (0.0, 0.0))
    assert corner.where is Where.ON_BOUNDARY and origin_id in corner.facet_ids
    assert locate_facet(graph, (-1.0, -1.0)).where is Where.UNEXPLORED


def test_origin_facet_alpha_is_the_cost():
    data, graph = explored()
    model = evaluate(graph, data, (0.2, 0.3))
    assert_allclose(model.alpha, [0.2, 0.3])
    assert_allclose(model.beta, [0.5, -0.1])


def test_margin_facet_alpha_is_constant():
    data, graph = explored()
    model = evaluate(graph, data, (2.0, 3.0))
    assert_allclose(model.alpha, [0.5, 0.5], atol=1e-12)
    assert_allclose(model.beta, [1.0, 0.0], atol=1e-12)


def test_path_matches_oracle():
    data, graph = explored()
    for c in ((0.2, 0.3), (2.0, 0.3), (0.3, 2.0), (4.0, 1.5)):
        model = evaluate(graph, data, c)
        solution = solve_dual(data, c[0], c[1])
        assert_allclose(model.beta, solution.beta, atol=1e-6)


def test_boundary_point():
    data, graph = explored()
    try:
        evaluate(graph, data, (0.5, 0.2))
    except BoundaryPoint as e:
        assert len(e.facet_ids) == 2
    else:
        raise AssertionError("expected BoundaryPoint")
    model = evaluate(graph, data, (0.5, 0.2), accept_boundary=True)
    assert_allclose(model.alpha, [0.5, 0.2], atol=1e-12)


def test_alpha_is_continuous_across_an_edge():
    data, graph = explored()
    located = locate_facet(graph, (0.5, 0.2))
    first, second = (evaluate_in(graph, data, f, (0.5, 0.2)) for f in located.facet_ids)
    assert np.max(np.abs(first.alpha - second.alpha)) <= 1e-8


def test_unexplored_point():
    data, graph = explored()
    try:
        evaluate(graph, data, (-1.0, 0.5))
    except UnexploredPoint:
        return
    raise AssertionError("expected UnexploredPoint")


def test_predict():
    B = 0.01
    assert predict([0.0, 1.0 / B], [3.0], B) == (1.0, 1)
    assert predict([0.0, 0.0], [3.0], B) == (0.0, 1)
    score, label = predict([-1.0, 0.0], [2.0], B)
    assert score == -2.0 and label == -1
    try:
        predict([0.0, 1.0], [1.0, 2.0], B)
    except DimensionMismatch:
        return
    raise AssertionError("expected DimensionMismatch")


def test_diagonal_crossings():
    _, graph = explored()
    crossings = diagonal_crossings(graph, 2.0)
    assert len(crossings) == 1
    crossing = crossings[0]
    assert abs(crossing.c - 0.5) < 1e-12
    assert graph.facets[crossing.from_facet].key == ActiveSets.origin(2, 1).canonical_key
    assert set(crossing.events) == {Event(0, 1), Event(1, 1)}


def test_alpha_at_vertices():
    data, graph = explored()
    rows = alpha_at_vertices(graph, data, [0])
    assert len(rows) == 9
    assert all(0.0 <= row['alpha'] <= 0.5 + 1e-12 for row in rows)


def gaussian_explored():
    data = make_gaussian_dataset(2, 4, 8, seed=1)
    return data, run(data, ExploreConfig(parallel_facets=False))


def test_facet_models_satisfy_the_kkt_conditions():
    data, graph = gaussian_explored()
    checked = 0
    for facet in graph.facets.values():
        c = facet_mean(graph, facet.id)
        if c is None or facet.special is not None:
            continue
        alpha = alpha_at(facet.sets, data, c)
        scores = data.X.T @ (data.X @ alpha)
        upper = data.upper_bounds(c[0], c[1])
        tol = 1e-8 * (1.0 + max(c))
        for i in facet.sets.margin:
            assert abs(scores[i] - 1.0) <= tol
            assert -tol <= alpha[i] <= upper[i] + tol
        for i in facet.sets.i_plus + facet.sets.i_minus:
            assert scores[i] <= 1.0 + tol and alpha[i] == upper[i]
        for i in facet.sets.o:
            assert scores[i] >= 1.0 - tol and alpha[i] == 0.0
        checked += 1
    assert checked > 0


def test_facet_touching_the_diagonal_at_a_corner_is_skipped():
    def halfplane(a_plus, a_minus, b, sample):
        return HalfPlane(AffineConstraint(AffineFunctional(a_plus, a_minus, b), ConstraintFamily.SCORE_O, sample, 0))

    below = [HalfPlane(c) for c in AXIS_CONSTRAINTS] + [halfplane(1.0, 0.0, -1.0, 0)]
    for top in (1.0, 1.0 + 1e-12):
        fb = intersect_halfplanes(below + [halfplane(0.0, -1.0, top, 1)])
        assert _diagonal_interval(fb, 5.0) is None
    fb = intersect_halfplanes(below + [halfplane(0.0, -1.0, 1.5, 1)])
    assert_allclose(_diagonal_interval(fb, 5.0), (1.0, 1.5))


def test_diagonal_crossings_match_an_oracle_sweep():
    data, graph = gaussian_explored()
    t_max = min(50.0, 2.0 * max(max(v.coords) for v in graph.vertices.values()))
    crossings = diagonal_crossings(graph, t_max)
    assert crossings and all(crossing.events for crossing in crossings)
    assert all(a.c < b.c for a, b in zip(crossings, crossings[1:]))

    previous = None
    keys = set()
    for t in np.linspace(0.01, t_max, 150):
        sets = kkt_classify(data, solve_dual(data, t, t), t, t)
        if isinstance(sets, Ambiguous):
            previous = None
            continue
        keys.add(sets.canonical_key)
        located = locate_facet(graph, (t, t))
        if located.where is Where.FACET:
            assert graph.facets[located.facet_id].key == sets.canonical_key
        if previous is not None and previous[1] != sets.canonical_key:
            assert any(previous[0] <= crossing.c <= t for crossing in crossings), f"no crossing in [{previous[0]}, {t}]"
        previous = (t, sets.canonical_key)
    assert len(keys) <= len(crossings) + 1


def test_grid_regions_are_explored_facets():
    data, graph = gaussian_explored()
    sampled = grid_probe(data, GridSpec((0.01, 3.0), (0.01, 3.0), 15), workers=2)
    regions = distinct_regions(sampled)
    assert regions
    assert regions <= set(graph.key_index)
    assert len(regions) <= len(graph.facets)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All model query tests passed")
