#!/usr/bin/env python
# test_path_graph.py - Test the layered graph store and the four layer phases

import sys
import logging

import numpy as np

from errors import DanglingReference
from numerics.kkt_constraints import ActiveSets, ConstraintFamily, Degeneracy, Event
from regpath.path_graph import PathGraph, close_facet, event_path, explore_layer, facet_mean, index_group, relabel
from storage.dataset_loader import Dataset

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_path_graph')


class Linked:
    def __init__(self, id, links):
        self.id = id
        self.links = links


def two_points():
    """Orthogonal columns: the origin facet is [0, 1/2]^2 and four facets meet at (1/2, 1/2)"""
    return Dataset.from_arrays([[1.0], [-1.0]], [1, -1], 1.0)


def explored(data):
    graph = PathGraph(meta={'n_samples': data.n_samples})
    graph.add_facet(ActiveSets.origin(data.n_samples, data.n_plus), 0)
    m = 0
    while m < len(graph.layers) and graph.layers[m]['facets']:
        explore_layer(graph, m, data, workers=1)
        m += 1
    return graph


def _vertex_at(graph, point):
    return next(v for v in graph.vertices.values() if np.allclose(v.coords, point, atol=1e-9))


def test_index_group_labels():
    labels = index_group({'A': 'ref_A'}, ['A', 'B', 'A'], lambda item: item)
    assert labels == ['ref_A', ('fresh', 1), 'ref_A']
    assert index_group({'A': 'ref_A'}, [], lambda item: item) == []
    assert index_group({}, ['B', 'C', 'B'], lambda item: item) == [('fresh', 1), ('fresh', 2), ('fresh', 1)]


def test_relabel_rewrites_links():
    first, second = Linked(1, [1, 2]), Linked(2, [3])
    changed = relabel([first, second], {2: 3}, lambda t: t.links, live={1, 3})
    assert changed == [first]
    assert first.links == [1, 3]
    assert relabel([first, second], {}, lambda t: t.links) == []


def test_relabel_refuses_dangling_reference():
    target = Linked(1, [1, 2])
    try:
        relabel([target], {2: 9}, lambda t: t.links, live={1, 3})
    except DanglingReference:
        return
    raise AssertionError("expected DanglingReference")


def test_duplicate_facet_key_rejected():
    graph = PathGraph()
    graph.add_facet(ActiveSets.origin(2, 1), 0)
    try:
        graph.add_facet(ActiveSets.origin(2, 1), 1)
    except ValueError:
        return
    raise AssertionError("expected ValueError")


def test_merge_vertices_rewrites_edges():
    graph = PathGraph()
    keep, drop = graph.add_vertex((1.0, 1.0), 0), graph.add_vertex((1.0, 1.0), 0)
    edge = graph.add_edge(('axis', 'k', 'axis_cplus'), 0)
    graph.link_edge_vertex(edge, drop)
    graph.merge_vertices(keep.id, [drop.id])
    assert drop.id not in graph.vertices
    assert edge.vertex_links == [keep.id]
    assert edge.id in keep.edge_links
    assert graph.integrity_errors() == []


def test_close_origin_facet():
    data = two_points()
    graph = PathGraph()
    facet = graph.add_facet(ActiveSets.origin(2, 1), 0)
    result = close_facet(facet, [], data)
    assert result.special is None
    assert result.boundary.bounded
    assert len(result.pieces) == 4
    families = {p.constraint.family for p in result.pieces}
    assert families == {ConstraintFamily.AXIS_CPLUS, ConstraintFamily.AXIS_CMINUS, ConstraintFamily.SCORE_I}
    events = {p.events for p in result.pieces if p.axis is None}
    assert events == {(Event(0, 1),), (Event(1, 1),)}


def test_singular_facet_is_special():
    duplicated = Dataset.from_arrays([[1.0], [1.0], [-1.0]], [1, 1, -1], 1.0)
    graph = PathGraph()
    facet = graph.add_facet(ActiveSets.build(2, m_plus=[0, 1], i_minus=[2]), 0)
    result = close_facet(facet, [], duplicated)
    assert result.special is Degeneracy.MULTI_EVENT_EDGE
    assert result.boundary is None


def test_two_point_layers():
    graph = explored(two_points())
    summary = graph.summary()
    assert summary['facets'] == 4
    assert summary['layers'] == 2
    assert summary['vertices'] == 4
    assert summary['edges'] == 8
    assert graph.integrity_errors() == []
    assert all(v.status == 'closed' for v in graph.vertices.values())


def test_vertex_loop_closes_at_the_crossing():
    graph = explored(two_points())
    crossing = _vertex_at(graph, (0.5, 0.5))
    assert not crossing.on_axis
    assert len(crossing.edge_links) == 4
    facets = {f for e in crossing.edge_links for f in graph.edges[e].facet_links}
    assert {graph.facets[f].key for f in facets} == {
        ActiveSets.origin(2, 1).canonical_key,
        ActiveSets.build(1, m_plus=[0], i_minus=[1]).canonical_key,
        ActiveSets.build(1, i_plus=[0], m_minus=[1]).canonical_key,
        ActiveSets.build(1, m_plus=[0], m_minus=[1]).canonical_key,
    }
    origin = _vertex_at(graph, (0.0, 0.0))
    assert origin.required_degree == 2 and len(origin.edge_links) == 2
    axis_vertex = _vertex_at(graph, (0.5, 0.0))
    assert axis_vertex.required_degree == 3 and len(axis_vertex.edge_links) == 3


def test_spawned_edges_close_in_the_next_layer():
    graph = explored(two_points())
    spawned = [e for e in graph.edges.values() if e.spawned]
    assert len(spawned) == 2
    assert all(len(e.facet_links) == 2 for e in spawned)
    assert all(e.unbounded and e.ray is not None for e in spawned)


def test_facet_mean_and_event_path():
    graph = explored(two_points())
    origin_id = graph.key_index[ActiveSets.origin(2, 1).canonical_key]
    assert np.allclose(facet_mean(graph, origin_id), (0.25, 0.25))
    path = event_path(graph, 0, extent=10.0)
    assert len(path) == 2
    assert {piece['t'] for piece in path} == {1}


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All path graph tests passed")
