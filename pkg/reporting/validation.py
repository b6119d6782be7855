# reporting/validation.py
import logging
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from config import DEFAULT_SEED, ORACLE_VALIDATE_MAX_ITER
from errors import InconsistentEvent, MaxIterExceeded, SingularGram
from geometry.polytope2d import Location, contains
from numerics.kkt_constraints import (
    apply_event, build_constraints, constraint_for_event, functionals_opposed, joint_update, alpha_at
)
from numerics.qp_oracle import solve_dual, dual_objective
from regpath.model_query import Where, locate_facet, evaluate_in

logger = logging.getLogger(__name__)

ORACLE_BETA_TOL = 1e-5
ORACLE_GAP_TOL = 1e-7
CONTINUITY_TOL = 1e-8
AFFINE_TOL = 1e-10
FLIP_TOL = 1e-7


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int = 0
    worst: float = 0.0
    failures: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    suites: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s.passed for s in self.suites)

    def suite(self, name):
        return next(s for s in self.suites if s.name == name)

    def as_dict(self):
        return {
            'passed': self.passed,
            'suites': [{
                'name': s.name, 'passed': s.passed, 'checked': s.checked, 'worst': s.worst,
                'failures': s.failures[:20], 'notes': s.notes,
            } for s in self.suites],
        }


def _explored_window(graph):
    """Box spanned by the vertices of resolved bounded facets, or of all vertices"""
    coords = [p for f in graph.facets.values()
              if f.boundary is not None and f.boundary.bounded and f.special is None
              for p in f.boundary.vertices]
    if not coords:
        coords = [v.coords for v in graph.vertices.values()] or [(1.0, 1.0)]
    hi = np.maximum(np.array(coords).max(axis=0), 1e-12)
    return float(hi[0]), float(hi[1])


def _interior_points(graph, rng, n_samples, window):
    points = []
    attempts = 0
    while len(points) < n_samples and attempts < 50 * n_samples:
        attempts += 1
        c = (float(rng.uniform(0.0, window[0])), float(rng.uniform(0.0, window[1])))
        located = locate_facet(graph, c)
        if located.where is Where.FACET:
            points.append((c, located.facet_id))
    return points


def check_integrity(graph):
    errors = graph.integrity_errors()
    return SuiteResult('referential_integrity', not errors, len(graph.edges) + len(graph.vertices),
                       float(len(errors)), errors)


def check_oracle(graph, data, rng, n_samples, window, progress=False, max_iter=ORACLE_VALIDATE_MAX_ITER):
    """
    beta and dual objective of the path against the coordinate-descent oracle

    Points are solved in order of C+ + C-, each warm-started from the previous
    oracle solution. Points where the oracle does not converge are skipped.
    """
    result = SuiteResult('oracle_equivalence', True)
    points = [(c, f) for c, f in _interior_points(graph, rng, n_samples, window)
              if graph.facets[f].special is None]
    points.sort(key=lambda p: (p[0][0] + p[0][1], p[0][0]))
    previous = None
    skipped = 0
    for c, facet_id in tqdm(points, desc='oracle', disable=not progress):
        try:
            solution = solve_dual(data, c[0], c[1], max_iter=max_iter, alpha0=previous)
        except MaxIterExceeded as e:
            skipped += 1
            logger.debug(f"Oracle skipped at {c}: {str(e)}")
            continue
        previous = solution.alpha
        model = evaluate_in(graph, data, facet_id, c)
        deviation = float(np.max(np.abs(model.beta - solution.beta)))
        path_objective = dual_objective(data, model.alpha)
        gap = abs(path_objective - solution.dual_objective) / max(1.0, abs(solution.dual_objective))
        result.checked += 1
        result.worst = max(result.worst, deviation)
        if deviation > ORACLE_BETA_TOL or gap > ORACLE_GAP_TOL:
            result.failures.append(f"{c} in facet {facet_id}: |beta diff| {deviation:.2e}, gap {gap:.2e}")
    if points and not result.checked:
        result.failures.append(f"oracle converged at none of {len(points)} points")
    if skipped:
        logger.warning(f"Oracle did not converge at {skipped} of {len(points)} points")
    result.notes = {'skipped': skipped, 'window': list(window)}
    result.passed = not result.failures
    return result


def check_continuity(graph, data, rng, n_samples, window):
    """alpha agrees across closed edges and is affine inside facets"""
    result = SuiteResult('continuity', True)
    closed = [e for e in graph.edges.values() if e.status == 'closed' and len(e.facet_links) == 2
              and all(graph.facets[f].boundary is not None for f in e.facet_links)]
    for k in rng.permutation(len(closed))[:n_samples]:
        edge = closed[k]
        a, b = (np.array(graph.vertices[v].coords) for v in edge.vertex_links)
        point = tuple(a + rng.uniform() * (b - a))
        try:
            first, second = (alpha_at(graph.facets[f].sets, data, point) for f in edge.facet_links)
        except SingularGram:
            continue
        deviation = float(np.max(np.abs(first - second)))
        result.checked += 1
        result.worst = max(result.worst, deviation)
        if deviation > CONTINUITY_TOL * max(1.0, float(np.max(np.abs(first)))):
            result.failures.append(f"edge {edge.id} at {point}: {deviation:.2e}")

    for c, facet_id in _interior_points(graph, rng, n_samples, window):
        other = _interior_points(graph, rng, 1, window)
        if not other or other[0][1] != facet_id:
            continue
        sets = graph.facets[facet_id].sets
        c2 = other[0][0]
        mid = (0.5 * (c[0] + c2[0]), 0.5 * (c[1] + c2[1]))
        deviation = float(np.max(np.abs(alpha_at(sets, data, mid) -
                                        0.5 * (alpha_at(sets, data, c) + alpha_at(sets, data, c2)))))
        result.checked += 1
        result.worst = max(result.worst, deviation)
        if deviation > AFFINE_TOL * max(1.0, max(c + c2)):
            result.failures.append(f"facet {facet_id} segment {c}-{c2}: {deviation:.2e}")
    result.passed = not result.failures
    return result


def check_flip_identity(graph, data):
    """Constraint of each shared edge, built on both facets, is negated"""
    result = SuiteResult('flip_identity', True)
    cache = {}

    def constraints_of(facet_id):
        if facet_id not in cache:
            try:
                cache[facet_id] = build_constraints(graph.facets[facet_id].sets, data)
            except SingularGram:
                cache[facet_id] = None
        return cache[facet_id]

    for edge in graph.edges.values():
        if edge.is_axis or len(edge.facet_links) != 2 or len(edge.events) != 1 or edge.status != 'closed':
            continue
        if any(graph.facets[f].special is not None for f in edge.facet_links):
            continue
        first, second = (constraints_of(f) for f in edge.facet_links)
        if first is None or second is None:
            continue
        u, v = constraint_for_event(first, edge.event), constraint_for_event(second, edge.event)
        if u is None or v is None:
            result.failures.append(f"edge {edge.id}: event {edge.event} missing on one side")
            continue
        holds, deviation = functionals_opposed(u.functional, v.functional, FLIP_TOL)
        result.checked += 1
        result.worst = max(result.worst, deviation)
        if not holds:
            result.failures.append(f"edge {edge.id}: deviation {deviation:.2e}")
    result.passed = not result.failures
    return result


def _describe_vertex(vertex, edges):
    events = sorted({(ev.sample, ev.t) for e in edges for ev in e.events})
    axis_edges = sorted(e.axis.value for e in edges if e.is_axis)
    return (f"vertex {vertex.id} at {vertex.coords} (axes {sorted(vertex.axes)}, axis edges {axis_edges}, "
            f"events {events}, split samples {sorted(vertex.split_samples)})")


def check_vertex_loops(graph):
    """
    Closed vertices have the right degree; off-axis ones close the event loop

    An on-axis vertex is a fan from one axis edge to the other: its facets
    number one less than its edges.
    """
    result = SuiteResult('vertex_loop', True)
    for vertex in graph.vertices.values():
        if vertex.status != 'closed' or vertex.quarantined:
            continue
        edges = [graph.edges[e] for e in vertex.edge_links]
        facet_ids = {f for e in edges for f in e.facet_links}
        if any(graph.facets[f].special is not None for f in facet_ids):
            continue
        result.checked += 1
        if len(edges) != vertex.required_degree:
            result.failures.append(f"{_describe_vertex(vertex, edges)}: {len(edges)} edges, "
                                   f"expected {vertex.required_degree}")
            continue
        if vertex.on_axis:
            if len(facet_ids) != len(edges) - 1:
                result.failures.append(f"{_describe_vertex(vertex, edges)}: {len(facet_ids)} incident facets "
                                       f"for {len(edges)} edges")
            continue
        if len(facet_ids) != 4:
            result.failures.append(f"{_describe_vertex(vertex, edges)}: {len(facet_ids)} incident facets")
            continue
        events = sorted({e.event for e in edges if len(e.events) == 1}, key=lambda e: (e.sample, e.t))
        keys = {graph.facets[f].key for f in facet_ids}
        try:
            S = graph.facets[min(facet_ids)].sets
            loop = {S.canonical_key, apply_event(S, events[0]).canonical_key,
                    apply_event(S, events[1]).canonical_key, joint_update(S, events[0], events[1]).canonical_key}
        except (InconsistentEvent, IndexError):
            loop = set()
        if loop != keys:
            result.failures.append(f"{_describe_vertex(vertex, edges)}: joint events do not close the loop")
    result.passed = not result.failures
    return result


def check_tiling(graph, rng, n_samples, window):
    """Every sampled point lies in one facet, on a boundary, or in an unexplored region"""
    result = SuiteResult('tiling', True)
    counts = {'facet': 0, 'boundary': 0, 'unexplored': 0, 'overlap': 0}
    for _ in range(n_samples):
        c = (float(rng.uniform(0.0, window[0])), float(rng.uniform(0.0, window[1])))
        inside = [f for f in graph.facets.values()
                  if f.boundary is not None and contains(f.boundary, c) is Location.INSIDE]
        if len(inside) > 1:
            counts['overlap'] += 1
            result.failures.append(f"{c} inside facets {[f.id for f in inside]}")
            continue
        where = locate_facet(graph, c).where
        counts[{Where.FACET: 'facet', Where.ON_BOUNDARY: 'boundary', Where.UNEXPLORED: 'unexplored'}[where]] += 1
    result.checked = n_samples
    result.worst = counts['unexplored'] / max(1, n_samples)
    result.notes = dict(counts, unexplored_fraction=result.worst, window=list(window))
    result.passed = not result.failures
    return result


def validate(graph, data, n_samples=200, seed=DEFAULT_SEED, window=None, progress=False):
    """
    Run every invariant suite on an explored path

    Args:
        graph (PathGraph): explored path
        data (Dataset): training data of the path
        n_samples (int): random points per sampling suite
        seed (int): sampling seed
        window (tuple, optional): sampling window, defaults to the explored vertices' box

    Returns:
        ValidationReport: pass/fail per suite with worst deviations
    """
    rng = np.random.default_rng(seed)
    window = tuple(window) if window is not None else _explored_window(graph)
    report = ValidationReport()
    report.suites.append(check_integrity(graph))
    report.suites.append(check_oracle(graph, data, rng, n_samples, window, progress))
    report.suites.append(check_continuity(graph, data, rng, min(n_samples, 100), window))
    report.suites.append(check_flip_identity(graph, data))
    report.suites.append(check_vertex_loops(graph))
    report.suites.append(check_tiling(graph, rng, 5 * n_samples, window))
    for suite in report.suites:
        level = logging.INFO if suite.passed else logging.WARNING
        logger.log(level, f"{suite.name}: {'pass' if suite.passed else 'FAIL'} "
                          f"({suite.checked} checked, worst {suite.worst:.3e})")
    return report
