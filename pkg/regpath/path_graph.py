# regpath/path_graph.py
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from config import TOL_FEAS, TOL_RANK, PATH_EXTENT, PARALLEL_WORKERS
from errors import (
    SingularGram, EmptyInterior, InfeasibleRegion, InconsistentEvent, DanglingReference, LoopViolation
)
from geometry.polytope2d import (
    HalfPlane, FacetBoundary, intersect_halfplanes, touching, coincident, polygon_area
)
from numerics.kkt_constraints import (
    ActiveSets, Degeneracy, build_constraints, constraint_for_event,
    apply_event, apply_events, joint_update, detect_degeneracy
)

logger = logging.getLogger(__name__)

LOOP_VIOLATION = 'LOOP_VIOLATION'


@dataclass
class Vertex:
    """Point where boundary pieces meet; identified by discrete keys, never by coordinates"""
    id: int
    coords: tuple
    layer: int
    edge_links: set = field(default_factory=set)
    axes: set = field(default_factory=set)
    keys: set = field(default_factory=set)
    split_samples: set = field(default_factory=set)
    uniqueness: str = 'single'
    quarantined: bool = False

    @property
    def on_axis(self):
        return bool(self.axes)

    @property
    def required_degree(self):
        """
        4 off-axis, 3 on one axis, 2 at the origin corner, plus one for every
        sample whose t = 1 and t = 0 lines meet here (on its own class axis)
        """
        return 4 - len(self.axes) + len(self.split_samples)

    @property
    def status(self):
        return 'closed' if len(self.edge_links) >= self.required_degree else 'open'


@dataclass
class Edge:
    """
    Boundary piece shared by up to two facets.

    `constraint` is the piece's functional as built on `constraint_facet`;
    `ray` is the unit direction towards infinity for an edge with one vertex.
    """
    id: int
    key: object
    layer: int
    events: tuple = ()
    axis: object = None
    facet_links: list = field(default_factory=list)
    vertex_links: list = field(default_factory=list)
    constraint: object = None
    constraint_facet: int = None
    direction: tuple = None
    ray: tuple = None
    anchor: tuple = None
    unbounded: bool = False
    spawned: bool = False
    uniqueness: str = 'single'

    @property
    def event(self):
        return self.events[0] if self.events else None

    @property
    def is_axis(self):
        return self.axis is not None

    @property
    def status(self):
        return 'closed' if len(self.vertex_links) == 2 else 'open'


@dataclass
class Facet:
    """Region of constant active sets"""
    id: int
    sets: ActiveSets
    layer: int
    edge_links: list = field(default_factory=list)
    special: Degeneracy = None
    reason: str = None
    processed: bool = False
    closed_without_clipping: bool = False
    boundary: FacetBoundary = None

    @property
    def key(self):
        return self.sets.canonical_key

    @property
    def bounded(self):
        return None if self.boundary is None else self.boundary.bounded


@dataclass
class BoundaryPiece:
    constraint: object
    events: tuple
    start: tuple
    end: tuple
    direction: tuple

    @property
    def axis(self):
        return self.constraint.family if self.constraint.is_axis else None


@dataclass
class FacetResult:
    """Outcome of closing one facet in CEF"""
    facet_id: int
    boundary: FacetBoundary = None
    pieces: list = field(default_factory=list)
    corners: list = field(default_factory=list)
    degenerate_corners: list = field(default_factory=list)
    special: Degeneracy = None
    reason: str = None


@dataclass
class Spawn:
    """Fourth facet and two open edges derived at one vertex"""
    vertex_id: int
    sets: ActiveSets
    edges: tuple


class PathGraph:
    """
    Layered vertex/edge/facet store of a two-dimensional regularization path.

    `key_index` maps a facet's canonical key to its id, `edge_index` maps an
    edge key (the unordered pair of facet keys, or (axis, facet key)) to its
    id and `vertex_index` maps every discrete vertex key to its id.
    """

    def __init__(self, meta=None):
        self.vertices = {}
        self.edges = {}
        self.facets = {}
        self.key_index = {}
        self.edge_index = {}
        self.vertex_index = {}
        self.layers = []
        self.unexplored = []
        self.meta = dict(meta or {})
        self.stats = defaultdict(int)
        self.pending = {}
        self._next_id = {'vertex': 0, 'edge': 0, 'facet': 0}

    def _new_id(self, kind):
        self._next_id[kind] += 1
        return self._next_id[kind]

    def ensure_layer(self, m):
        while len(self.layers) <= m:
            self.layers.append({'vertices': set(), 'edges': set(), 'facets': set()})
        return self.layers[m]

    def add_facet(self, sets, layer, facet_id=None):
        key = sets.canonical_key
        if key in self.key_index:
            raise ValueError(f"facet key {key} already present as facet {self.key_index[key]}")
        facet_id = facet_id if facet_id is not None else self._new_id('facet')
        self._next_id['facet'] = max(self._next_id['facet'], facet_id)
        facet = Facet(facet_id, sets, layer)
        self.facets[facet_id] = facet
        self.key_index[key] = facet_id
        self.ensure_layer(layer)['facets'].add(facet_id)
        return facet

    def add_edge(self, key, layer, edge_id=None, **attributes):
        edge_id = edge_id if edge_id is not None else self._new_id('edge')
        self._next_id['edge'] = max(self._next_id['edge'], edge_id)
        edge = Edge(edge_id, key, layer, **attributes)
        self.edges[edge_id] = edge
        if key is not None:
            self.edge_index[key] = edge_id
        self.ensure_layer(layer)['edges'].add(edge_id)
        return edge

    def add_vertex(self, coords, layer, vertex_id=None):
        vertex_id = vertex_id if vertex_id is not None else self._new_id('vertex')
        self._next_id['vertex'] = max(self._next_id['vertex'], vertex_id)
        vertex = Vertex(vertex_id, (float(coords[0]), float(coords[1])), layer)
        self.vertices[vertex_id] = vertex
        self.ensure_layer(layer)['vertices'].add(vertex_id)
        return vertex

    def facet_by_key(self, key):
        facet_id = self.key_index.get(key)
        return None if facet_id is None else self.facets[facet_id]

    def link_facet_edge(self, facet_id, edge):
        if facet_id is None:
            return
        if facet_id not in edge.facet_links:
            if len(edge.facet_links) >= 2:
                logger.warning(f"Edge {edge.id} already joins facets {edge.facet_links}; ignoring facet {facet_id}")
                return
            edge.facet_links.append(facet_id)
        facet = self.facets[facet_id]
        if edge.id not in facet.edge_links:
            facet.edge_links.append(edge.id)

    def link_edge_vertex(self, edge, vertex):
        if vertex.id not in edge.vertex_links:
            if len(edge.vertex_links) >= 2:
                logger.warning(f"Edge {edge.id} already has vertices {edge.vertex_links}; ignoring vertex {vertex.id}")
                return
            edge.vertex_links.append(vertex.id)
        vertex.edge_links.add(edge.id)

    def merge_vertices(self, keep_id, drop_ids):
        """Fold replicated vertices into one survivor and rewrite edge references"""
        drop_ids = [d for d in drop_ids if d != keep_id]
        if not drop_ids:
            return
        keep = self.vertices[keep_id]
        mapping = {d: keep_id for d in drop_ids}
        touched = set()
        for d in drop_ids:
            touched |= self.vertices[d].edge_links
        live = set(self.vertices) - set(drop_ids)
        relabel([self.edges[e] for e in sorted(touched)], mapping, lambda e: e.vertex_links, live)
        for d in drop_ids:
            dropped = self.vertices.pop(d)
            keep.edge_links |= dropped.edge_links
            keep.axes |= dropped.axes
            keep.keys |= dropped.keys
            keep.split_samples |= dropped.split_samples
            keep.quarantined = keep.quarantined or dropped.quarantined
            for key in dropped.keys:
                self.vertex_index[key] = keep_id
            self.layers[dropped.layer]['vertices'].discard(d)
        keep.uniqueness = 'single'
        self.stats['merged_vertices'] += len(drop_ids)

    def add_unexplored(self, kind, facet_id=None, reason=None, vertices=()):
        descriptor = {
            'kind': kind,
            'facet_id': facet_id,
            'key': self.facets[facet_id].key if facet_id is not None else None,
            'reason': reason,
            'edges': [],
            'vertices': sorted(vertices),
        }
        self.unexplored.append(descriptor)
        return descriptor

    def refresh_unexplored(self):
        """Recompute the bounding edges and vertices of every descriptor"""
        for descriptor in self.unexplored:
            facet = self.facets.get(descriptor['facet_id'])
            if facet is None:
                continue
            descriptor['edges'] = sorted(e for e in facet.edge_links if e in self.edges)
            vertex_ids = set(descriptor['vertices'])
            for e in descriptor['edges']:
                vertex_ids.update(self.edges[e].vertex_links)
            descriptor['vertices'] = sorted(v for v in vertex_ids if v in self.vertices)

    def facet_status(self, facet_id):
        """'closed' when the facet's edges form a complete cycle"""
        return 'closed' if _cycle_order(self, self.facets[facet_id]) is not None else 'open'

    def edge_points(self, edge_id, extent=PATH_EXTENT):
        """Two points spanning an edge; infinite ends are placed `extent` away"""
        edge = self.edges[edge_id]
        points = [np.array(self.vertices[v].coords) for v in edge.vertex_links]
        if len(points) == 2:
            return tuple(points[0]), tuple(points[1])
        if len(points) == 1 and edge.ray is not None:
            return tuple(points[0]), tuple(points[0] + extent * np.array(edge.ray))
        if edge.anchor is not None and edge.direction is not None:
            anchor, direction = np.array(edge.anchor), np.array(edge.direction)
            return tuple(anchor - extent * direction), tuple(anchor + extent * direction)
        return None

    def integrity_errors(self):
        """List every connectivity reference that does not resolve both ways"""
        errors = []
        n = self.meta.get('n_samples')
        for edge in self.edges.values():
            for f in edge.facet_links:
                if f not in self.facets:
                    errors.append(f"edge {edge.id} links missing facet {f}")
                elif edge.id not in self.facets[f].edge_links:
                    errors.append(f"edge {edge.id} links facet {f} which does not list it")
            for v in edge.vertex_links:
                if v not in self.vertices:
                    errors.append(f"edge {edge.id} links missing vertex {v}")
                elif edge.id not in self.vertices[v].edge_links:
                    errors.append(f"edge {edge.id} links vertex {v} which does not list it")
            if len(edge.vertex_links) > 2 or len(edge.facet_links) > 2:
                errors.append(f"edge {edge.id} has too many links")
        for vertex in self.vertices.values():
            for e in vertex.edge_links:
                if e not in self.edges:
                    errors.append(f"vertex {vertex.id} links missing edge {e}")
                elif vertex.id not in self.edges[e].vertex_links:
                    errors.append(f"vertex {vertex.id} links edge {e} which does not list it")
        keys = set()
        for facet in self.facets.values():
            if facet.key in keys:
                errors.append(f"facet key {facet.key} is not unique")
            keys.add(facet.key)
            if self.key_index.get(facet.key) != facet.id:
                errors.append(f"key index does not resolve facet {facet.id}")
            for e in facet.edge_links:
                if e not in self.edges:
                    errors.append(f"facet {facet.id} links missing edge {e}")
            if n is not None and facet.sets.n_samples != n:
                errors.append(f"facet {facet.id} partitions {facet.sets.n_samples} samples, expected {n}")
        return errors

    def summary(self):
        return {
            'layers': sum(1 for layer in self.layers if layer['facets']),
            'facets': len(self.facets),
            'edges': len(self.edges),
            'vertices': len(self.vertices),
            'special': sum(1 for f in self.facets.values() if f.special is not None),
            'unexplored': len(self.unexplored),
        }


def index_group(reference_keys, candidate_items, attribute_fn, fresh_label=None):
    """
    Label candidates by the reference item that shares their attribute

    Args:
        reference_keys (dict): attribute -> label of the already known items
        candidate_items (iterable): items to label
        attribute_fn (callable): item -> hashable attribute
        fresh_label (callable, optional): attribute -> label for unmatched
            attributes; defaults to ('fresh', k)

    Returns:
        list: one label per candidate; equal unmatched attributes share a fresh label
    """
    fresh = {}
    labels = []
    for item in candidate_items:
        attribute = attribute_fn(item)
        if attribute in reference_keys:
            labels.append(reference_keys[attribute])
            continue
        if attribute not in fresh:
            fresh[attribute] = fresh_label(attribute) if fresh_label else ('fresh', len(fresh) + 1)
        labels.append(fresh[attribute])
    return labels


def relabel(targets, label_source, connectivity_fn, live=None):
    """
    Rewrite connectivity references through a label map

    Args:
        targets (iterable): objects whose links are rewritten
        label_source (dict): old id -> surviving id
        connectivity_fn (callable): target -> mutable list or set of ids
        live (collection, optional): ids that must exist after rewriting

    Returns:
        list: targets whose links changed
    """
    changed = []
    for target in targets:
        links = connectivity_fn(target)
        rewritten = []
        for ref in links:
            new = label_source.get(ref, ref)
            if live is not None and new not in live:
                raise DanglingReference(f"{type(target).__name__} {getattr(target, 'id', '?')} references pruned id {new}")
            if new not in rewritten:
                rewritten.append(new)
        if isinstance(links, set):
            if set(rewritten) != links:
                links.clear()
                links.update(rewritten)
                changed.append(target)
        elif rewritten != list(links):
            links[:] = rewritten
            changed.append(target)
    return changed


def _distinct_lines(halfplanes, tol):
    lines = []
    for h in halfplanes:
        if not any(coincident(h, g, tol) for g in lines):
            lines.append(h)
    return lines


def _event_order(e):
    return (e.sample, e.t)


def close_facet(facet, known, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK, extent=PATH_EXTENT):
    """
    Compute one facet's boundary pieces and corners

    Args:
        facet (Facet): facet to close
        known (list): (events, axis) of the facet's already known edges
        data (Dataset): training data

    Returns:
        FacetResult: pieces in counterclockwise order, or a special flag
    """
    result = FacetResult(facet.id)
    try:
        constraints = build_constraints(facet.sets, data, tol_rank=tol_rank)
    except SingularGram as e:
        result.special = Degeneracy.MULTI_EVENT_EDGE
        result.reason = f"singular margin Gram: {str(e)}"
        return result

    halfplanes = [HalfPlane(c) for c in constraints]
    mandatory = []
    for events, axis in known:
        for h in halfplanes:
            if (axis is not None and h.constraint.family is axis) or \
                    (axis is None and h.constraint.event in events):
                if h not in mandatory:
                    mandatory.append(h)
                break

    try:
        boundary = intersect_halfplanes(halfplanes, mandatory, tol_feas, extent=extent)
    except (EmptyInterior, InfeasibleRegion) as e:
        result.special = Degeneracy.MULTI_JOINT_EVENT_VERTEX
        result.reason = f"{type(e).__name__}: {str(e)}"
        return result
    result.boundary = boundary

    sample_planes = [h for h in halfplanes if not h.constraint.is_axis and h.norm > 0.0]
    for k, h in enumerate(boundary.active):
        events = ()
        if not h.constraint.is_axis:
            group = [g for g in sample_planes if coincident(g, h, tol_rank)]
            if len(group) > 1 and \
                    detect_degeneracy([g.constraint for g in group], tol_rank) is Degeneracy.MULTI_EVENT_EDGE:
                events = tuple(sorted({g.constraint.event for g in group}, key=_event_order))
            else:
                events = (h.constraint.event,)
        start, end = boundary.segments[k]
        result.pieces.append(BoundaryPiece(h.constraint, events, start, end, tuple(h.direction())))

    n = len(result.pieces)
    for k in range(n):
        start = result.pieces[k].start
        if start is None:
            continue
        result.corners.append((start, (k - 1) % n, k))
        lines = _distinct_lines(touching(sample_planes, start, tol_feas), tol_rank)
        if len(lines) >= 3 and \
                detect_degeneracy([h.constraint for h in lines], tol_rank) is Degeneracy.MULTI_JOINT_EVENT_VERTEX:
            result.degenerate_corners.append(start)
    if result.degenerate_corners:
        result.special = Degeneracy.MULTI_JOINT_EVENT_VERTEX
        result.reason = f"{len(result.degenerate_corners)} vertex(es) with three or more concurrent events"
    return result


def cef(graph, m, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK, extent=PATH_EXTENT, workers=PARALLEL_WORKERS):
    """
    Close edges and facets of layer m

    Boundaries are computed in parallel; failures become special flags and
    never abort the layer. Results are kept in graph.pending[m] for MEV.
    """
    todo = sorted(f for f in graph.ensure_layer(m)['facets']
                  if not graph.facets[f].processed and graph.facets[f].special is None)
    jobs = []
    for facet_id in todo:
        facet = graph.facets[facet_id]
        known = [(graph.edges[e].events, graph.edges[e].axis) for e in facet.edge_links]
        jobs.append((facet, known))

    def work(job):
        return close_facet(job[0], job[1], data, tol_feas, tol_rank, extent)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]
    results.sort(key=lambda r: r.facet_id)

    n_special = sum(1 for r in results if r.special is not None)
    logger.debug(f"CEF layer {m}: closed {len(results)} facets, {n_special} special")
    graph.pending.setdefault(m, {})['cef'] = results
    return graph


def _edge_key(facet, piece, neighbour):
    if piece.axis is not None:
        return ('axis', facet.key, piece.axis.value)
    if neighbour is None:
        return ('orphan', facet.key, tuple((e.sample, e.t) for e in piece.events))
    return frozenset((facet.key, neighbour.canonical_key))


def _reference_key(edge_key, facet_key):
    if isinstance(edge_key, frozenset):
        return min(edge_key)
    return facet_key


def _endpoint_key(edge_key, facet_key, end):
    """Orientation-free name of an edge end seen from a facet traversing it counterclockwise"""
    forward = facet_key == _reference_key(edge_key, facet_key)
    label = ('head' if end == 'end' else 'tail') if forward else ('tail' if end == 'end' else 'head')
    return ('end', edge_key, label)


def _loop_key(sets, e1, e2):
    """The four active-set keys around a crossing of two single events"""
    try:
        return ('loop', frozenset((
            sets.canonical_key,
            apply_event(sets, e1).canonical_key,
            apply_event(sets, e2).canonical_key,
            joint_update(sets, e1, e2).canonical_key,
        )))
    except InconsistentEvent:
        return None


def resolve_vertex(graph, coords, layer, keys, axes=()):
    """Existing vertex sharing any key, merging replicated ones, or a new vertex"""
    ids = sorted({graph.vertex_index[k] for k in keys if k in graph.vertex_index})
    if not ids:
        vertex = graph.add_vertex(coords, layer)
    else:
        vertex = graph.vertices[ids[0]]
        vertex.uniqueness = 'replicated'
        graph.merge_vertices(ids[0], ids[1:])
        vertex.uniqueness = 'single'
    vertex.axes |= set(axes)
    for key in keys:
        vertex.keys.add(key)
        graph.vertex_index[key] = vertex.id
    return vertex


def mev(graph, m, data):
    """
    Merge closed edges and open vertices of layer m

    Facets across every closed edge are indexed against all known facets and
    created in layer m+1 when new. Edges are identified by their facet pair
    and vertices by their discrete keys: the shared end of a twin edge and,
    off-axis, the four facets around the crossing.
    """
    results = graph.pending.get(m, {}).get('cef', [])
    graph.ensure_layer(m + 1)

    crossings = []
    for result in results:
        facet = graph.facets[result.facet_id]
        facet.processed = True
        if result.boundary is None:
            facet.special = result.special
            facet.reason = result.reason
            graph.add_unexplored(result.special.name, facet.id, result.reason)
            logger.warning(f"Facet {facet.id} quarantined ({result.special.name}): {result.reason}")
            continue
        facet.boundary = result.boundary
        for k, piece in enumerate(result.pieces):
            neighbour = None
            if piece.events:
                try:
                    neighbour = apply_events(facet.sets, piece.events)
                except InconsistentEvent as e:
                    logger.warning(f"Facet {facet.id}: no facet across events {piece.events}: {str(e)}")
            crossings.append((result, k, neighbour))

    candidates = [n for _, _, n in crossings if n is not None]
    labels = index_group(graph.key_index, candidates, lambda s: s.canonical_key)
    created = 0
    for sets, label in zip(candidates, labels):
        if isinstance(label, tuple) and sets.canonical_key not in graph.key_index:
            graph.add_facet(sets, m + 1)
            created += 1

    piece_edges = {}
    for result, k, neighbour in crossings:
        facet = graph.facets[result.facet_id]
        piece = result.pieces[k]
        key = _edge_key(facet, piece, neighbour)
        edge_id = graph.edge_index.get(key)
        if edge_id is None:
            edge = graph.add_edge(key, m, events=piece.events, axis=piece.axis)
        else:
            edge = graph.edges[edge_id]
            edge.uniqueness = 'replicated'
            graph.stats['merged_edges'] += 1
            edge.uniqueness = 'single'
        if edge.constraint is None:
            edge.constraint = piece.constraint
            edge.constraint_facet = facet.id
            edge.direction = piece.direction
        if piece.start is None or piece.end is None:
            edge.unbounded = True
            if edge.constraint_facet == facet.id:
                if piece.start is None and piece.end is None:
                    edge.anchor = tuple(result.boundary.rays[0][0]) if result.boundary.rays else None
                elif piece.start is None:
                    edge.ray = tuple(-np.asarray(piece.direction))
                else:
                    edge.ray = tuple(piece.direction)
        graph.link_facet_edge(facet.id, edge)
        if neighbour is not None:
            graph.link_facet_edge(graph.key_index[neighbour.canonical_key], edge)
        piece_edges[(facet.id, k)] = edge

    for result in results:
        if result.boundary is None:
            continue
        facet = graph.facets[result.facet_id]
        ordered = [piece_edges[(facet.id, k)].id for k in range(len(result.pieces))]
        stray = [e for e in facet.edge_links if e not in ordered]
        if stray:
            logger.warning(f"Facet {facet.id}: known edges {stray} are not on its boundary")
        facet.edge_links = ordered + stray

        for coords, k_in, k_out in result.corners:
            p_in, p_out = result.pieces[k_in], result.pieces[k_out]
            e_in, e_out = piece_edges[(facet.id, k_in)], piece_edges[(facet.id, k_out)]
            keys = {_endpoint_key(e_in.key, facet.key, 'end'), _endpoint_key(e_out.key, facet.key, 'start')}
            axes = {p.axis.value for p in (p_in, p_out) if p.axis is not None}
            if not axes and len(p_in.events) == 1 and len(p_out.events) == 1:
                loop = _loop_key(facet.sets, p_in.events[0], p_out.events[0])
                if loop is not None:
                    keys.add(loop)
            vertex = resolve_vertex(graph, coords, m, keys, axes)
            if not axes and len(p_in.events) == 1 and len(p_out.events) == 1 and \
                    p_in.events[0].sample == p_out.events[0].sample:
                vertex.split_samples.add(p_in.events[0].sample)
            graph.link_edge_vertex(e_in, vertex)
            graph.link_edge_vertex(e_out, vertex)

        if result.special is not None:
            facet.special = result.special
            facet.reason = result.reason
            corner_ids = [graph.vertex_index.get(_endpoint_key(piece_edges[(facet.id, k)].key, facet.key, 'start'))
                          for _, _, k in result.corners if result.pieces[k].start in result.degenerate_corners]
            graph.add_unexplored(result.special.name, facet.id, result.reason,
                                 [v for v in corner_ids if v is not None])

    logger.debug(f"MEV layer {m}: {created} new facets in layer {m + 1}")
    return graph


def _event_corner(graph, vertex):
    """A processed regular facet with two single-event edges at the vertex"""
    facet_ids = sorted({f for e in vertex.edge_links for f in graph.edges[e].facet_links})
    for facet_id in facet_ids:
        facet = graph.facets[facet_id]
        if not facet.processed or facet.special is not None or facet.boundary is None:
            continue
        at_vertex = [graph.edges[e] for e in facet.edge_links if e in vertex.edge_links]
        if len(at_vertex) != 2 or any(e.is_axis or len(e.events) != 1 for e in at_vertex):
            continue
        e1, e2 = at_vertex[0].event, at_vertex[1].event
        if e1.sample != e2.sample:
            return facet, e1, e2
    return None


def close_vertex(graph, vertex, facet, e1, e2, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK):
    """
    Derive the fourth facet at a vertex from the vertex loop

    Raises:
        LoopViolation: the joint events do not lead back around the loop
    """
    S = facet.sets
    try:
        A = apply_event(S, e1)
        B = apply_event(S, e2)
        D = joint_update(S, e1, e2)
        closes = (apply_event(D, e1).canonical_key == B.canonical_key and
                  apply_event(B, e2).canonical_key == S.canonical_key and
                  apply_event(D, e2).canonical_key == A.canonical_key)
    except InconsistentEvent as e:
        raise LoopViolation(f"vertex {vertex.id}: {str(e)}")
    if not closes:
        raise LoopViolation(f"vertex {vertex.id}: events {e1}, {e2} do not commute")
    if A.canonical_key not in graph.key_index or B.canonical_key not in graph.key_index:
        raise LoopViolation(f"vertex {vertex.id}: a facet adjacent to facet {facet.id} is missing")

    try:
        constraints = build_constraints(D, data, tol_rank=tol_rank)
    except SingularGram:
        constraints = []
    band = tol_feas * (1.0 + max(abs(vertex.coords[0]), abs(vertex.coords[1])))
    for c in constraints:
        norm = c.functional.normal_norm()
        value = c.value(vertex.coords) / norm if norm > 0.0 else c.value(vertex.coords)
        if value < -max(band, 1e3 * tol_feas):
            raise LoopViolation(
                f"vertex {vertex.id}: constraint {c.family.name} of sample {c.sample} "
                f"is {value:.3e} at the vertex in the fourth facet")
    return Spawn(vertex.id, D, ((A.canonical_key, e2), (B.canonical_key, e1)))


def cv(graph, m, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK):
    """
    Close the open off-axis vertices of layer m

    Each yields a fourth facet and two open edges, kept in graph.pending[m]
    for MEF. Vertices at special facets are skipped; loop violations are
    quarantined.
    """
    spawns = []
    for vertex_id in sorted(graph.ensure_layer(m)['vertices']):
        vertex = graph.vertices.get(vertex_id)
        if vertex is None or vertex.on_axis or vertex.quarantined or vertex.status == 'closed':
            continue
        corner = _event_corner(graph, vertex)
        if corner is None:
            continue
        facet, e1, e2 = corner
        try:
            spawns.append(close_vertex(graph, vertex, facet, e1, e2, data, tol_feas, tol_rank))
        except LoopViolation as e:
            logger.warning(f"Quarantining vertex {vertex.id}: {str(e)}")
            vertex.quarantined = True
            graph.stats['loop_violations'] += 1
            graph.add_unexplored(LOOP_VIOLATION, facet.id, str(e), [vertex.id])
    graph.pending.setdefault(m, {})['cv'] = spawns
    logger.debug(f"CV layer {m}: {len(spawns)} vertex loops")
    return graph


def _cycle_order(graph, facet):
    """(vertex ids, edge ids) of the facet's closed edge cycle, or None"""
    edges = [graph.edges[e] for e in facet.edge_links if e in graph.edges]
    if len(edges) < 3 or any(len(e.vertex_links) != 2 for e in edges):
        return None
    adjacency = defaultdict(list)
    for e in edges:
        for v in e.vertex_links:
            adjacency[v].append(e)
    if any(len(incident) != 2 for incident in adjacency.values()):
        return None

    first = edges[0]
    order_v = [first.vertex_links[0]]
    order_e = [first.id]
    current_v, current_e = first.vertex_links[1], first
    while current_v != order_v[0]:
        nxt = next(e for e in adjacency[current_v] if e is not current_e)
        order_v.append(current_v)
        order_e.append(nxt.id)
        current_v = nxt.vertex_links[0] if nxt.vertex_links[1] == current_v else nxt.vertex_links[1]
        current_e = nxt
        if len(order_e) > len(edges):
            return None
    if len(order_e) != len(edges):
        return None
    return order_v, order_e


def close_from_cycle(graph, facet, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK):
    """Assemble a facet's boundary from its complete edge cycle without clipping"""
    cycle = _cycle_order(graph, facet)
    if cycle is None:
        return False
    vertex_ids, _ = cycle
    coords = [graph.vertices[v].coords for v in vertex_ids]
    if polygon_area(coords) < 0:
        vertex_ids = vertex_ids[::-1]
        coords = coords[::-1]
    by_pair = {frozenset(graph.edges[e].vertex_links): e for e in facet.edge_links}
    n = len(vertex_ids)
    ordered_edges = [by_pair[frozenset((vertex_ids[k], vertex_ids[(k + 1) % n]))] for k in range(n)]

    try:
        constraints = build_constraints(facet.sets, data, tol_rank=tol_rank)
    except SingularGram:
        return False
    active = []
    for e in ordered_edges:
        edge = graph.edges[e]
        if edge.is_axis:
            c = next((c for c in constraints if c.family.value == edge.axis or c.family is edge.axis), None)
        else:
            c = constraint_for_event(constraints, edge.event)
        if c is None:
            return False
        active.append(HalfPlane(c))

    band = tol_feas * (1.0 + max(max(abs(x), abs(y)) for x, y in coords))
    for c in constraints:
        norm = c.functional.normal_norm()
        if norm == 0.0:
            continue
        if min(c.value(p) / norm for p in coords) < -max(band, 1e3 * tol_feas):
            return False

    facet.boundary = FacetBoundary(
        active=active, vertices=list(coords), bounded=True, rays=[],
        segments=[(coords[k], coords[(k + 1) % n]) for k in range(n)], polygon=list(coords))
    facet.edge_links = ordered_edges + [e for e in facet.edge_links if e not in ordered_edges]
    facet.processed = True
    facet.closed_without_clipping = True
    for e, h, k in zip(ordered_edges, active, range(n)):
        edge = graph.edges[e]
        if edge.constraint is None:
            edge.constraint = h.constraint
            edge.constraint_facet = facet.id
            edge.direction = tuple(h.direction())
    graph.stats['closed_without_clipping'] += 1
    return True


def mef(graph, m, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK):
    """
    Merge open edges and facets spawned at the vertices of layer m

    Fourth facets are indexed by canonical key; open edges spawned twice
    become one closed edge, and facets whose edge cycle is then complete are
    closed without clipping.
    """
    spawns = graph.pending.get(m, {}).get('cv', [])
    graph.ensure_layer(m + 1)

    labels = index_group(graph.key_index, [s.sets for s in spawns], lambda s: s.canonical_key)
    for spawn, label in zip(spawns, labels):
        if isinstance(label, tuple) and spawn.sets.canonical_key not in graph.key_index:
            graph.add_facet(spawn.sets, m + 1)

    records = []
    for spawn in spawns:
        d_key = spawn.sets.canonical_key
        for a_key, event in spawn.edges:
            records.append((frozenset((a_key, d_key)), a_key, d_key, event, spawn.vertex_id))
    edge_labels = index_group(graph.edge_index, records, lambda r: r[0])
    for record, label in zip(records, edge_labels):
        key, a_key, d_key, event, vertex_id = record
        edge_id = graph.edge_index.get(key)
        if edge_id is None:
            edge = graph.add_edge(key, m + 1, events=(event,), spawned=True)
        else:
            edge = graph.edges[edge_id]
        graph.link_facet_edge(graph.key_index[a_key], edge)
        graph.link_facet_edge(graph.key_index[d_key], edge)
        vertex = graph.vertices.get(vertex_id)
        if vertex is not None:
            graph.link_edge_vertex(edge, vertex)

    closed = 0
    for facet_id in sorted(graph.layers[m + 1]['facets']):
        facet = graph.facets[facet_id]
        if not facet.processed and facet.special is None and close_from_cycle(graph, facet, data, tol_feas, tol_rank):
            closed += 1
    graph.pending.pop(m, None)
    logger.debug(f"MEF layer {m}: {len(records)} open edges, {closed} facets closed from their cycle")
    return graph


def explore_layer(graph, m, data, tol_feas=TOL_FEAS, tol_rank=TOL_RANK, extent=PATH_EXTENT,
                  workers=PARALLEL_WORKERS):
    """Run CEF, MEV, CV and MEF on layer m"""
    cef(graph, m, data, tol_feas, tol_rank, extent, workers)
    mev(graph, m, data)
    cv(graph, m, data, tol_feas, tol_rank)
    mef(graph, m, data, tol_feas, tol_rank)
    graph.refresh_unexplored()
    return graph


def facet_mean(graph, facet_id):
    """Mean of a bounded facet's vertices, None for open or unresolved facets"""
    facet = graph.facets[facet_id]
    if facet.boundary is None or not facet.boundary.bounded:
        return None
    return tuple(np.mean(np.asarray(facet.boundary.vertices), axis=0))


def event_path(graph, sample, extent=PATH_EXTENT):
    """
    One-dimensional path of a sample's events: every edge carrying it

    Returns:
        list: dicts with edge id, event type and the two end points
    """
    path = []
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        for event in edge.events:
            if event.sample != sample:
                continue
            points = graph.edge_points(edge_id, extent)
            if points is None:
                continue
            path.append({'edge': edge_id, 't': event.t, 'start': points[0], 'end': points[1]})
    return path
