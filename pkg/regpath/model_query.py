# regpath/model_query.py
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from config import TOL_FEAS
from errors import BoundaryPoint, DimensionMismatch, UnexploredPoint
from geometry.polytope2d import Location, contains
from numerics.kkt_constraints import Event, alpha_at

logger = logging.getLogger(__name__)


class Where(Enum):
    FACET = 'facet'
    ON_BOUNDARY = 'on_boundary'
    UNEXPLORED = 'unexplored'


@dataclass
class Located:
    where: Where
    facet_ids: list = field(default_factory=list)

    @property
    def facet_id(self):
        return self.facet_ids[0] if self.where is Where.FACET else None


@dataclass
class ModelAt:
    """Closed-form model at one cost pair"""
    c: tuple
    facet_id: int
    alpha: np.ndarray
    beta: np.ndarray


@dataclass
class Crossing:
    """Point where the diagonal C+ = C- leaves one facet for the next"""
    c: float
    from_facet: int
    to_facet: int
    events: list


def _in_box(fb, c, band):
    lo, hi = fb.bounding_box()
    return lo[0] - band <= c[0] <= hi[0] + band and lo[1] - band <= c[1] <= hi[1] + band


def locate_facet(graph, c, tol=TOL_FEAS):
    """
    Facet containing c

    Returns:
        Located: FACET with one id, ON_BOUNDARY with every facet whose
        boundary band holds c, or UNEXPLORED
    """
    c = (float(c[0]), float(c[1]))
    band = tol * (1.0 + max(abs(c[0]), abs(c[1])))
    inside, boundary = [], []
    for facet_id in sorted(graph.facets):
        fb = graph.facets[facet_id].boundary
        if fb is None or not _in_box(fb, c, band):
            continue
        location = contains(fb, c, tol)
        if location is Location.INSIDE:
            inside.append(facet_id)
        elif location is Location.BOUNDARY:
            boundary.append(facet_id)
    if len(inside) == 1 and not boundary:
        return Located(Where.FACET, inside)
    if inside or boundary:
        if len(inside) > 1:
            logger.warning(f"{c} lies inside several facets {inside}")
        return Located(Where.ON_BOUNDARY, inside + boundary)
    return Located(Where.UNEXPLORED)


def evaluate(graph, data, c, accept_boundary=False):
    """
    alpha and beta at c from the facet's affine path

    Args:
        graph (PathGraph): explored path
        data (Dataset): training data the path was explored on
        c (tuple): (C+, C-)
        accept_boundary (bool): evaluate on the first adjacent facet instead
            of raising BoundaryPoint

    Returns:
        ModelAt: alpha per sample and beta = X alpha
    """
    located = locate_facet(graph, c)
    if located.where is Where.UNEXPLORED:
        raise UnexploredPoint(f"{tuple(c)} is not inside an explored facet")
    if located.where is Where.ON_BOUNDARY and not accept_boundary:
        raise BoundaryPoint(f"{tuple(c)} lies on the boundary of facets {located.facet_ids}", located.facet_ids)
    return evaluate_in(graph, data, located.facet_ids[0], c)


def evaluate_in(graph, data, facet_id, c):
    """Evaluate a given facet's affine path at c (no containment check)"""
    facet = graph.facets[facet_id]
    alpha = alpha_at(facet.sets, data, c)
    return ModelAt((float(c[0]), float(c[1])), facet_id, alpha, data.X @ alpha)


def predict(beta, raw_sample, B):
    """
    Score and label of a raw sample

    Returns:
        tuple: (score, label) with label +1 when the score is exactly 0
    """
    beta = np.asarray(beta, dtype=float)
    raw_sample = np.asarray(raw_sample, dtype=float).ravel()
    if raw_sample.size != beta.size - 1:
        raise DimensionMismatch(f"sample has {raw_sample.size} features, model expects {beta.size - 1}")
    score = float(beta[:-1] @ raw_sample + beta[-1] * B)
    return score, (1 if score >= 0.0 else -1)


def _diagonal_interval(fb, t_max, tol=TOL_FEAS):
    """Parameter range of C+ = C- = t inside a facet, None when it is only a point"""
    lo, hi = 0.0, t_max
    for h in fb.active:
        f = h.functional
        slope = f.a_plus + f.a_minus
        if slope > 0:
            lo = max(lo, -f.b / slope)
        elif slope < 0:
            hi = min(hi, -f.b / slope)
        elif f.b < 0:
            return None
    return (lo, hi) if hi - lo > tol * (1.0 + abs(hi)) else None


def _membership_events(sets_a, sets_b):
    events = []
    for i in range(sets_a.n_samples):
        before, after = sets_a.membership(i), sets_b.membership(i)
        if before != after:
            events.append(Event(i, 0 if 'O' in (before, after) else 1))
    return events


def diagonal_crossings(graph, t_max, tol=TOL_FEAS):
    """
    Single-cost path: breakpoints of the diagonal C+ = C- up to t_max

    Facets the diagonal only touches at a vertex are skipped, so a crossing
    through a vertex is one breakpoint with the events of both lines.

    Returns:
        list: Crossing per change of facet, ordered by C
    """
    pieces = []
    for facet_id in sorted(graph.facets):
        fb = graph.facets[facet_id].boundary
        if fb is None:
            continue
        interval = _diagonal_interval(fb, t_max, tol)
        if interval is not None:
            pieces.append((interval[0], interval[1], facet_id))
    pieces.sort()

    crossings = []
    for (lo_a, hi_a, a), (lo_b, hi_b, b) in zip(pieces, pieces[1:]):
        c = float(0.5 * (hi_a + lo_b))
        if crossings and abs(c - crossings[-1].c) <= tol * (1.0 + abs(c)):
            a = crossings.pop().from_facet
        events = _membership_events(graph.facets[a].sets, graph.facets[b].sets)
        crossings.append(Crossing(c, a, b, events))
    return crossings


def alpha_at_vertices(graph, data, samples=None):
    """
    Multiplier traces: alpha of chosen samples at every vertex of every facet

    Returns:
        list: dicts with facet, vertex coordinates, sample and alpha
    """
    samples = list(range(data.n_samples)) if samples is None else list(samples)
    rows = []
    for facet_id in sorted(graph.facets):
        facet = graph.facets[facet_id]
        if facet.boundary is None:
            continue
        for point in facet.boundary.vertices:
            alpha = alpha_at(facet.sets, data, point)
            for i in samples:
                rows.append({'facet': facet_id, 'c_plus': point[0], 'c_minus': point[1],
                             'sample': i, 'alpha': float(alpha[i])})
    return rows
