# regpath/explorer.py
import logging
import time
from dataclasses import dataclass, asdict

import numpy as np
from tqdm import tqdm

from config import (
    TOL_FEAS, TOL_RANK, TOL_KKT, MAX_LAYERS_PER_SAMPLE, PATH_EXTENT,
    PARALLEL_WORKERS, MAX_RESTARTS, DEFAULT_SEED, ORACLE_MAX_ITER, ORACLE_VALIDATE_MAX_ITER, RESTART_STEPS
)
from errors import AmbiguousSeed, ConfigError, LayerBudgetExceeded, MaxIterExceeded, SingularGram
from numerics.kkt_constraints import ActiveSets, build_constraints
from numerics.qp_oracle import Ambiguous, solve_dual, kkt_classify
from geometry.polytope2d import Location, contains
from regpath.model_query import Where, locate_facet
from regpath.path_graph import PathGraph, explore_layer

logger = logging.getLogger(__name__)

ORIGIN = 'origin'


@dataclass
class ExploreConfig:
    """Settings of one exploration run; `init` is ORIGIN or a (C+, C-) point"""
    init: object = ORIGIN
    tol_feas: float = TOL_FEAS
    tol_rank: float = TOL_RANK
    tol_kkt: float = TOL_KKT
    max_layers: int = None
    parallel_facets: bool = True
    workers: int = PARALLEL_WORKERS
    restart_on_halt: bool = True
    max_restarts: int = MAX_RESTARTS
    extent: float = PATH_EXTENT
    seed: int = DEFAULT_SEED
    progress: bool = False

    def validate(self):
        for name in ('tol_feas', 'tol_rank', 'tol_kkt', 'extent'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_layers is not None and self.max_layers < 1:
            raise ConfigError(f"max_layers must be at least 1, got {self.max_layers}")
        if self.init != ORIGIN:
            try:
                c_plus, c_minus = (float(v) for v in self.init)
            except (TypeError, ValueError):
                raise ConfigError(f"init must be '{ORIGIN}' or a (C+, C-) pair, got {self.init!r}")
            if c_plus <= 0 or c_minus <= 0:
                raise ConfigError(f"seed point must have positive coordinates, got {self.init}")
        return self

    def layer_budget(self, n_samples):
        return self.max_layers if self.max_layers is not None else MAX_LAYERS_PER_SAMPLE * max(1, n_samples)


@dataclass
class RunStats:
    """Complexity report of a finished exploration"""
    layers: int
    n_samples: int
    facets: int
    edges: int
    vertices: int
    mean_layer_size: float
    mean_margin_size: float
    special: int
    unexplored: int
    restarts: int
    closed_without_clipping: int
    all_frontier_open: bool
    elapsed_seconds: float

    @classmethod
    def collect(cls, graph, restarts=0, elapsed=0.0):
        sizes = [len(layer['facets']) for layer in graph.layers if layer['facets']]
        margins = [len(f.sets.margin) for f in graph.facets.values()]
        return cls(
            layers=len(sizes),
            n_samples=graph.meta.get('n_samples', 0),
            facets=len(graph.facets),
            edges=len(graph.edges),
            vertices=len(graph.vertices),
            mean_layer_size=float(np.mean(sizes)) if sizes else 0.0,
            mean_margin_size=float(np.mean(margins)) if margins else 0.0,
            special=sum(1 for f in graph.facets.values() if f.special is not None),
            unexplored=len(graph.unexplored),
            restarts=restarts,
            closed_without_clipping=graph.stats.get('closed_without_clipping', 0),
            all_frontier_open=frontier_open(graph),
            elapsed_seconds=float(elapsed),
        )

    def log(self):
        logger.info(f"Explored {self.facets} facets, {self.edges} edges, {self.vertices} vertices "
                    f"in {self.layers} layers (N={self.n_samples}) in {self.elapsed_seconds:.2f}s")
        logger.info(f"Mean facets per layer {self.mean_layer_size:.2f}, mean margin size {self.mean_margin_size:.2f}, "
                    f"{self.special} special facets, {self.restarts} restarts")
        if self.n_samples and self.layers > 10 * self.n_samples:
            logger.warning(f"Layer count {self.layers} exceeds 10 x N = {10 * self.n_samples}")


def frontier_open(graph):
    """True when every resolved facet of the last non-empty layer is unbounded"""
    filled = [layer for layer in graph.layers if layer['facets']]
    if not filled:
        return False
    return all(graph.facets[f].boundary is None or not graph.facets[f].boundary.bounded
               for f in filled[-1]['facets'])


def _new_graph(data):
    return PathGraph(meta={
        'n_samples': data.n_samples,
        'n_plus': data.n_plus,
        'd': data.d,
        'B': data.B,
        'permutation': list(data.permutation or range(data.n_samples)),
    })


def init_origin(data):
    """Graph whose first layer is the facet with every sample at its upper bound"""
    if data.n_samples < 1:
        raise ConfigError("dataset has no samples")
    graph = _new_graph(data)
    graph.add_facet(ActiveSets.origin(data.n_samples, data.n_plus), 0)
    logger.info(f"Initialized at the origin with {data.n_samples} samples in I")
    return graph


def seed_sets(data, c, tol_kkt=TOL_KKT, tol_feas=TOL_FEAS, tol_rank=TOL_RANK, seed=DEFAULT_SEED,
              max_iter=ORACLE_MAX_ITER):
    """
    Active sets of the facet containing c, read off an oracle solve

    Raises:
        AmbiguousSeed: c lies within the tolerance band of a facet boundary
    """
    solution = solve_dual(data, c[0], c[1], max_iter=max_iter, seed=seed)
    sets = kkt_classify(data, solution, c[0], c[1], tol_kkt)
    if isinstance(sets, Ambiguous):
        raise AmbiguousSeed(f"samples {sets.samples} are within the KKT band at {tuple(c)}")
    try:
        constraints = build_constraints(sets, data, tol_rank=tol_rank)
    except SingularGram as e:
        raise AmbiguousSeed(f"margin set at {tuple(c)} is degenerate: {str(e)}")
    band = tol_feas * (1.0 + max(abs(c[0]), abs(c[1])))
    for constraint in constraints:
        if constraint.is_axis:
            continue
        norm = constraint.functional.normal_norm()
        value = constraint.value(c) / norm if norm > 0.0 else constraint.value(c)
        if value <= band:
            raise AmbiguousSeed(
                f"{tuple(c)} is within {band:.1e} of the {constraint.family.name} boundary of sample {constraint.sample}")
    return sets


def init_point(data, c, tol_kkt=TOL_KKT, tol_feas=TOL_FEAS, tol_rank=TOL_RANK, seed=DEFAULT_SEED):
    """Graph seeded with the facet containing an arbitrary point c"""
    if c[0] <= 0 or c[1] <= 0:
        raise ConfigError(f"seed point must have positive coordinates, got {tuple(c)}")
    sets = seed_sets(data, c, tol_kkt, tol_feas, tol_rank, seed)
    graph = _new_graph(data)
    graph.add_facet(sets, 0)
    logger.info(f"Initialized at {tuple(c)} with |M|={len(sets.margin)}")
    return graph


def _frontier_edges(graph):
    """
    Non-axis edges with a resolved regular facet on one side only

    These bound the explored area towards quarantined facets, orphan
    pieces or regions nothing has reached yet.
    """
    edges = []
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        if edge.is_axis:
            continue
        resolved = [f for f in edge.facet_links
                    if graph.facets[f].boundary is not None and graph.facets[f].special is None]
        if len(resolved) == 1:
            edges.append((edge, graph.facets[resolved[0]]))
    return edges


def _march_points(graph, edge, facet, extent, steps=RESTART_STEPS):
    """Points stepping away from a resolved facet across one of its edges, closest first"""
    ends = [np.array(graph.vertices[v].coords) for v in edge.vertex_links]
    if edge.constraint is None or not ends:
        return []
    if len(ends) == 2:
        mid = 0.5 * (ends[0] + ends[1])
    elif edge.ray is not None:
        mid = ends[0] + (1.0 + float(np.max(np.abs(ends[0])))) * np.array(edge.ray)
    else:
        mid = ends[0]
    f = edge.constraint.functional
    normal = np.array([f.a_plus, f.a_minus]) / f.normal_norm()
    nudge = 1e-6 * (1.0 + float(np.max(np.abs(mid))))
    if contains(facet.boundary, tuple(mid + nudge * normal)) is Location.INSIDE:
        normal = -normal
    points = []
    r = 1e-4 * (1.0 + float(np.max(np.abs(mid))))
    for _ in range(steps):
        c = mid + r * normal
        if c[0] <= 0.0 or c[1] <= 0.0 or np.max(np.abs(c)) >= extent:
            break
        points.append((float(c[0]), float(c[1])))
        r *= 2.0
    return points


def _try_seed(graph, data, config, c, m):
    if locate_facet(graph, c, config.tol_feas).where is not Where.UNEXPLORED:
        return False
    try:
        sets = seed_sets(data, c, config.tol_kkt, config.tol_feas, config.tol_rank, config.seed,
                         max_iter=ORACLE_VALIDATE_MAX_ITER)
    except (AmbiguousSeed, MaxIterExceeded) as e:
        logger.debug(f"Reseed attempt at {c} failed: {str(e)}")
        return False
    if sets.canonical_key in graph.key_index:
        return False
    graph.add_facet(sets, m)
    return True


def _restart(graph, data, config, m, rng, tried):
    """
    Seed a new facet beyond the explored area into layer m

    Frontier edges are crossed outward in growing steps until the oracle
    finds a regular facet nothing has reached yet; the centroid of each
    unexplored descriptor, perturbed on later attempts, is tried last.

    Returns:
        bool: True when a new facet was added
    """
    for edge, facet in _frontier_edges(graph):
        if ('edge', edge.id) in tried:
            continue
        tried.add(('edge', edge.id))
        for c in _march_points(graph, edge, facet, config.extent):
            if _try_seed(graph, data, config, c, m):
                logger.info(f"Restarted exploration at {c} beyond edge {edge.id} of facet {facet.id}")
                return True

    for index, descriptor in enumerate(graph.unexplored):
        if ('descriptor', index) in tried:
            continue
        tried.add(('descriptor', index))
        points = [graph.vertices[v].coords for v in descriptor['vertices'] if v in graph.vertices]
        if not points:
            continue
        centroid = np.mean(np.asarray(points), axis=0)
        scale = 1e-3 * (1.0 + float(np.max(np.abs(centroid))))
        for attempt in range(5):
            c = centroid + (rng.normal(0.0, scale, 2) if attempt else 0.0)
            c = (float(c[0]), float(c[1]))
            if c[0] <= 0 or c[1] <= 0:
                continue
            if _try_seed(graph, data, config, c, m):
                logger.info(f"Restarted exploration at {c} near {descriptor['kind']} region of facet {descriptor['facet_id']}")
                return True
    return False


def run(data, config=None):
    """
    Explore the whole regularization path layer by layer

    Args:
        data (Dataset): training data
        config (ExploreConfig, optional): run settings

    Returns:
        PathGraph: explored graph with RunStats in graph.stats
    """
    config = (config or ExploreConfig()).validate()
    started = time.perf_counter()
    if config.init == ORIGIN:
        graph = init_origin(data)
    else:
        graph = init_point(data, tuple(float(v) for v in config.init), config.tol_kkt,
                           config.tol_feas, config.tol_rank, config.seed)

    budget = config.layer_budget(data.n_samples)
    workers = config.workers if config.parallel_facets else 1
    rng = np.random.default_rng(config.seed)
    restarts = 0
    tried = set()
    m = 0
    progress = tqdm(desc='layers', unit='layer', disable=not config.progress)
    try:
        while True:
            while m < len(graph.layers) and graph.layers[m]['facets']:
                if m >= budget:
                    graph.stats.update(asdict(RunStats.collect(graph, restarts, time.perf_counter() - started)))
                    raise LayerBudgetExceeded(f"exploration needs more than {budget} layers", graph)
                explore_layer(graph, m, data, config.tol_feas, config.tol_rank, config.extent, workers)
                logger.info(f"Layer {m}: {len(graph.layers[m]['facets'])} facets, "
                            f"{len(graph.layers[m + 1]['facets'])} queued, {len(graph.facets)} total")
                progress.update(1)
                m += 1
            if not config.restart_on_halt or restarts >= config.max_restarts:
                break
            if not _restart(graph, data, config, m, rng, tried):
                break
            restarts += 1
    finally:
        progress.close()

    stats = RunStats.collect(graph, restarts, time.perf_counter() - started)
    graph.stats.update(asdict(stats))
    stats.log()
    return graph
