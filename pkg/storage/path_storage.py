# storage/path_storage.py
import json
import logging
from datetime import datetime

import pandas as pd

from geometry.polytope2d import FacetBoundary, HalfPlane
from numerics.kkt_constraints import (
    ActiveSets, AffineConstraint, AffineFunctional, ConstraintFamily, Degeneracy, Event, SET_NAMES
)
from regpath.model_query import alpha_at_vertices
from regpath.path_graph import PathGraph, event_path, facet_mean

logger = logging.getLogger(__name__)

FORMAT_NAME = 'acpath'
FORMAT_VERSION = 1
EVENT_PATH_COLUMNS = ['sample', 't', 'edge', 'start_c_plus', 'start_c_minus', 'end_c_plus', 'end_c_minus', 'unbounded']


def _point(p):
    return None if p is None else [float(p[0]), float(p[1])]


def _constraint_doc(constraint):
    f = constraint.functional
    return {
        'functional': [float(f.a_plus), float(f.a_minus), float(f.b)],
        'family': constraint.family.value,
        'sample': constraint.sample,
        't': constraint.event_type,
    }


def _constraint_from(doc):
    if doc is None:
        return None
    return AffineConstraint(AffineFunctional(*doc['functional']), ConstraintFamily(doc['family']),
                            doc['sample'], doc['t'])


def _edge_key_doc(key):
    if isinstance(key, frozenset):
        return sorted(key)
    if key[0] == 'orphan':
        return ['orphan', key[1], [list(e) for e in key[2]]]
    return list(key)


def _edge_key_from(doc):
    if doc[0] == 'axis':
        return ('axis', doc[1], doc[2])
    if doc[0] == 'orphan':
        return ('orphan', doc[1], tuple(tuple(e) for e in doc[2]))
    return frozenset(doc)


class PathStorage:
    """Serialize explored paths and their derived tables"""

    def to_document(self, graph):
        """
        JSON-ready dict of a graph

        Args:
            graph (PathGraph): explored path

        Returns:
            dict: vertices, edges, facets, unexplored descriptors, meta and stats
        """
        vertices = [{
            'id': v.id,
            'coords': _point(v.coords),
            'layer': v.layer,
            'edges': sorted(v.edge_links),
            'axes': sorted(v.axes),
            'split_samples': sorted(v.split_samples),
            'status': v.status,
            'quarantined': v.quarantined,
        } for v in sorted(graph.vertices.values(), key=lambda v: v.id)]

        edges = [{
            'id': e.id,
            'key': _edge_key_doc(e.key),
            'layer': e.layer,
            'events': [[ev.sample, ev.t] for ev in e.events],
            'axis': e.axis.value if e.axis is not None else None,
            'vertices': list(e.vertex_links),
            'facets': list(e.facet_links),
            'constraint': _constraint_doc(e.constraint) if e.constraint is not None else None,
            'constraint_facet': e.constraint_facet,
            'direction': _point(e.direction),
            'ray': _point(e.ray),
            'anchor': _point(e.anchor),
            'unbounded': e.unbounded,
            'spawned': e.spawned,
            'status': e.status,
        } for e in sorted(graph.edges.values(), key=lambda e: e.id)]

        facets = []
        for f in sorted(graph.facets.values(), key=lambda f: f.id):
            boundary = None
            if f.boundary is not None:
                boundary = {
                    'active': [_constraint_doc(h.constraint) for h in f.boundary.active],
                    'vertices': [_point(p) for p in f.boundary.vertices],
                    'bounded': f.boundary.bounded,
                    'rays': [[_point(p), _point(d)] for p, d in f.boundary.rays],
                    'segments': [[_point(a), _point(b)] for a, b in f.boundary.segments],
                    'polygon': [_point(p) for p in f.boundary.polygon],
                }
            mean = facet_mean(graph, f.id)
            facets.append({
                'id': f.id,
                'layer': f.layer,
                'key': f.key,
                'sets': {name: list(members) for name, members in zip(SET_NAMES, f.sets.groups())},
                'edges': list(f.edge_links),
                'special': f.special.name if f.special is not None else None,
                'reason': f.reason,
                'processed': f.processed,
                'closed_without_clipping': f.closed_without_clipping,
                'mean': _point(mean),
                'boundary': boundary,
            })

        return {
            'format': FORMAT_NAME,
            'version': FORMAT_VERSION,
            'created': datetime.now().isoformat(),
            'meta': graph.meta,
            'stats': dict(graph.stats),
            'vertices': vertices,
            'edges': edges,
            'facets': facets,
            'unexplored': graph.unexplored,
        }

    def from_document(self, doc):
        """Rebuild a PathGraph from a document made by to_document"""
        if doc.get('format') != FORMAT_NAME:
            raise ValueError(f"not an {FORMAT_NAME} document (format={doc.get('format')!r})")
        graph = PathGraph(meta=doc.get('meta', {}))
        graph.stats.update(doc.get('stats', {}))
        n_plus = graph.meta.get('n_plus', 0)

        for fd in doc['facets']:
            sets = ActiveSets.build(n_plus, *(fd['sets'].get(name, []) for name in SET_NAMES))
            facet = graph.add_facet(sets, fd['layer'], facet_id=fd['id'])
            facet.edge_links = list(fd['edges'])
            facet.special = Degeneracy[fd['special']] if fd['special'] else None
            facet.reason = fd.get('reason')
            facet.processed = fd.get('processed', True)
            facet.closed_without_clipping = fd.get('closed_without_clipping', False)
            bd = fd.get('boundary')
            if bd is not None:
                facet.boundary = FacetBoundary(
                    active=[HalfPlane(_constraint_from(c)) for c in bd['active']],
                    vertices=[tuple(p) for p in bd['vertices']],
                    bounded=bd['bounded'],
                    rays=[(tuple(p), tuple(d)) for p, d in bd['rays']],
                    segments=[(tuple(a) if a else None, tuple(b) if b else None) for a, b in bd['segments']],
                    polygon=[tuple(p) for p in bd['polygon']],
                )

        for ed in doc['edges']:
            graph.add_edge(
                _edge_key_from(ed['key']), ed['layer'], edge_id=ed['id'],
                events=tuple(Event(s, t) for s, t in ed['events']),
                axis=ConstraintFamily(ed['axis']) if ed['axis'] else None,
                facet_links=list(ed['facets']),
                vertex_links=list(ed['vertices']),
                constraint=_constraint_from(ed['constraint']),
                constraint_facet=ed['constraint_facet'],
                direction=tuple(ed['direction']) if ed['direction'] else None,
                ray=tuple(ed['ray']) if ed['ray'] else None,
                anchor=tuple(ed['anchor']) if ed['anchor'] else None,
                unbounded=ed['unbounded'],
                spawned=ed['spawned'],
            )

        for vd in doc['vertices']:
            vertex = graph.add_vertex(vd['coords'], vd['layer'], vertex_id=vd['id'])
            vertex.edge_links = set(vd['edges'])
            vertex.axes = set(vd['axes'])
            vertex.split_samples = set(vd.get('split_samples', []))
            vertex.quarantined = vd.get('quarantined', False)

        graph.unexplored = list(doc.get('unexplored', []))
        return graph

    def event_paths_frame(self, graph, samples=None):
        """One row per edge segment of each sample's event path"""
        n = graph.meta.get('n_samples', 0)
        samples = range(n) if samples is None else samples
        rows = []
        for i in samples:
            for piece in event_path(graph, i):
                edge = graph.edges[piece['edge']]
                rows.append({
                    'sample': i,
                    't': piece['t'],
                    'edge': piece['edge'],
                    'start_c_plus': piece['start'][0],
                    'start_c_minus': piece['start'][1],
                    'end_c_plus': piece['end'][0],
                    'end_c_minus': piece['end'][1],
                    'unbounded': edge.unbounded,
                })
        return pd.DataFrame(rows, columns=EVENT_PATH_COLUMNS)


def export_path(graph, fmt='json', samples=None):
    """
    Serialize a graph

    Args:
        graph (PathGraph): explored path
        fmt (str): 'json' for the full graph, 'csv' for per-sample event paths
        samples (list, optional): samples included in the CSV

    Returns:
        str: document text
    """
    storage = PathStorage()
    if fmt == 'json':
        return json.dumps(storage.to_document(graph), indent=1)
    if fmt == 'csv':
        return storage.event_paths_frame(graph, samples).to_csv(index=False, float_format='%.17g')
    raise ValueError(f"unknown export format {fmt!r}")


def import_path(text):
    """Inverse of export_path(graph, 'json')"""
    return PathStorage().from_document(json.loads(text))


def save_path(graph, path, fmt=None, samples=None):
    """Write a graph export to a file; the format follows the extension by default"""
    fmt = fmt or ('csv' if str(path).lower().endswith('.csv') else 'json')
    with open(path, 'w', encoding='utf-8') as f:
        f.write(export_path(graph, fmt, samples))
    logger.info(f"Saved {fmt.upper()} path with {len(graph.facets)} facets to {path}")


def load_path(path):
    with open(path, 'r', encoding='utf-8') as f:
        graph = import_path(f.read())
    logger.info(f"Loaded path with {len(graph.facets)} facets from {path}")
    return graph


def export_alpha_traces(graph, data, path, samples=None):
    """Write alpha of the chosen samples at every facet vertex as CSV"""
    frame = pd.DataFrame(alpha_at_vertices(graph, data, samples),
                         columns=['facet', 'c_plus', 'c_minus', 'sample', 'alpha'])
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Saved {len(frame)} alpha trace rows to {path}")
    return frame
