#!/usr/bin/env python
# test_kkt_constraints.py - Test active sets, events and the affine constraint builder

import sys
import logging

import numpy as np
from numpy.testing import assert_allclose

from errors import InconsistentEvent
from numerics.kkt_constraints import (
    ActiveSets, AffineConstraint, AffineFunctional, ConstraintFamily, Degeneracy, Event,
    alpha_at, apply_event, build_constraints, constraint_for_event, detect_degeneracy, factorize_margin,
    flip_identity_holds, joint_update, score_path, score_terms
)
from storage.dataset_loader import Dataset

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_kkt_constraints')

B = 0.01


def single_point():
    return Dataset(X=np.array([[2.0], [B]]), n_plus=1, B=B, feature_dim_raw=1)


def small_dataset():
    features = [[2.0, 1.0], [1.0, 2.5], [-2.0, -1.0], [-1.0, -2.0], [0.5, -0.5]]
    labels = [1, 1, -1, -1, -1]
    return Dataset.from_arrays(features, labels, B)


def _constraint(a_plus, a_minus, b, sample):
    return AffineConstraint(AffineFunctional(a_plus, a_minus, b), ConstraintFamily.SCORE_O, sample, 0)


def test_canonical_key_and_inverse():
    sets = ActiveSets.build(2, m_plus=[0], i_minus=[2], o=[1])
    assert sets.canonical_key == "M+:0|M-:|I+:|I-:2|O:1"
    assert ActiveSets.from_key(sets.canonical_key, 2) == sets


def test_sets_reject_wrong_class_side():
    try:
        ActiveSets.build(1, m_plus=[1], i_plus=[0])
    except ValueError:
        return
    raise AssertionError("negative sample accepted in M+")


def test_apply_event_moves_between_sets():
    origin = ActiveSets.origin(3, 2)
    to_margin = apply_event(origin, Event(0, 1))
    assert to_margin.m_plus == (0,)
    assert apply_event(to_margin, Event(0, 0)).o == (0,)
    assert apply_event(to_margin, Event(0, 1)) == origin


def test_inconsistent_events():
    origin = ActiveSets.origin(3, 2)
    for call in (lambda: apply_event(origin, Event(0, 0)),
                 lambda: joint_update(origin, Event(1, 1), Event(1, 1))):
        try:
            call()
        except InconsistentEvent:
            continue
        raise AssertionError("expected InconsistentEvent")


def test_single_point_origin_strip():
    data = single_point()
    norm2 = 4.0 + B * B
    constraints = build_constraints(ActiveSets.origin(1, 1), data)
    score = constraint_for_event(constraints, Event(0, 1))
    assert score.family is ConstraintFamily.SCORE_I
    assert_allclose([score.functional.a_plus, score.functional.a_minus, score.functional.b],
                    [-norm2, 0.0, 1.0], rtol=1e-12)
    assert_allclose(alpha_at(ActiveSets.origin(1, 1), data, (0.1, 0.7)), [0.1])


def test_single_point_margin_facet():
    data = single_point()
    norm2 = 4.0 + B * B
    sets = ActiveSets.build(1, m_plus=[0])
    constraints = build_constraints(sets, data)
    lower = next(c for c in constraints if c.family is ConstraintFamily.ALPHA_LOWER)
    upper = next(c for c in constraints if c.family is ConstraintFamily.ALPHA_UPPER)
    assert lower.functional.normal_norm() < 1e-12
    assert abs(lower.functional.b - 1.0 / norm2) < 1e-12
    assert_allclose(upper.functional.as_array(), [1.0, 0.0, -1.0 / norm2], atol=1e-12)
    assert_allclose(alpha_at(sets, data, (5.0, 5.0)), [1.0 / norm2])


def test_flip_identity_on_every_origin_edge():
    data = small_dataset()
    origin = ActiveSets.origin(data.n_samples, data.n_plus)
    for i in range(data.n_samples):
        holds, deviation = flip_identity_holds(origin, Event(i, 1), data)
        assert holds, f"sample {i}: deviation {deviation}"


def test_flip_identity_for_margin_to_outside():
    data = small_dataset()
    sets = ActiveSets.build(data.n_plus, m_plus=[0], i_plus=[1], i_minus=[2, 3], o=[4])
    holds, _ = flip_identity_holds(sets, Event(0, 0), data)
    assert holds


def test_margin_constraints_vanish_on_the_margin():
    data = small_dataset()
    sets = ActiveSets.build(data.n_plus, m_plus=[0], m_minus=[2], i_plus=[1], i_minus=[3, 4])
    c = (0.3, 0.4)
    alpha = alpha_at(sets, data, c)
    scores = data.X.T @ (data.X @ alpha)
    assert_allclose(scores[[0, 2]], [1.0, 1.0], atol=1e-10)
    for constraint in build_constraints(sets, data):
        if constraint.family is ConstraintFamily.SCORE_I:
            assert abs(constraint.value(c) - (1.0 - scores[constraint.sample])) < 1e-10


def test_detect_degeneracy():
    twin = [_constraint(1.0, 2.0, -1.0, 0), _constraint(2.0, 4.0, -2.0, 1)]
    assert detect_degeneracy(twin) is Degeneracy.MULTI_EVENT_EDGE
    concurrent = [_constraint(1.0, 0.0, -1.0, 0), _constraint(0.0, 1.0, -1.0, 1), _constraint(1.0, 1.0, -2.0, 2)]
    assert detect_degeneracy(concurrent) is Degeneracy.MULTI_JOINT_EVENT_VERTEX
    generic = [_constraint(1.0, 0.0, -1.0, 0), _constraint(0.0, 1.0, -1.0, 1)]
    assert detect_degeneracy(generic) is Degeneracy.GENERIC


def test_score_path_matches_direct_scores():
    data = small_dataset()
    for sets in (ActiveSets.build(data.n_plus, m_plus=[0], m_minus=[2], i_plus=[1], i_minus=[3, 4]),
                 ActiveSets.origin(data.n_samples, data.n_plus)):
        f = factorize_margin(sets, data)
        terms = score_terms(sets, data, f)
        outside = sets.i_plus + sets.i_minus + sets.o
        for c in ((0.3, 0.4), (1.0, 2.0), (5.0, 0.1)):
            scores = data.X.T @ (data.X @ alpha_at(sets, data, c))
            for i in outside:
                assert abs(score_path(i, sets, data, f).value(c) - scores[i]) <= 1e-10
                assert abs(score_path(i, sets, data, f, terms).value(c) - scores[i]) <= 1e-10


def test_score_constraints_agree_with_score_path():
    data = small_dataset()
    sets = ActiveSets.build(data.n_plus, m_plus=[0], i_plus=[1], i_minus=[2, 3], o=[4])
    f = factorize_margin(sets, data)
    for constraint in build_constraints(sets, data):
        if constraint.family is ConstraintFamily.SCORE_I:
            g = score_path(constraint.sample, sets, data, f)
            assert_allclose(constraint.functional.as_array(), [-g.a_plus, -g.a_minus, 1.0 - g.b], atol=1e-12)
        elif constraint.family is ConstraintFamily.SCORE_O:
            g = score_path(constraint.sample, sets, data, f)
            assert_allclose(constraint.functional.as_array(), [g.a_plus, g.a_minus, g.b - 1.0], atol=1e-12)


def test_apply_event_twice_restores_the_sets():
    data = small_dataset()
    sets = ActiveSets.build(data.n_plus, m_plus=[0], m_minus=[2], i_plus=[1], i_minus=[3], o=[4])
    for i in range(data.n_samples):
        membership = sets.membership(i)
        types = (0, 1) if membership.startswith('M') else ((0,) if membership == 'O' else (1,))
        for t in types:
            event = Event(i, t)
            assert apply_event(apply_event(sets, event), event) == sets


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All KKT constraint tests passed")
