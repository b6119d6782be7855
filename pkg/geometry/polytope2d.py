# geometry/polytope2d.py
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from config import TOL_FEAS, TOL_PARALLEL, PATH_EXTENT
from errors import EmptyInterior, InfeasibleRegion

logger = logging.getLogger(__name__)

# returned by constraint_intersection for parallel lines
PARALLEL = None


class Location(Enum):
    INSIDE = 'inside'
    BOUNDARY = 'boundary'
    OUTSIDE = 'outside'


@dataclass(frozen=True)
class HalfPlane:
    """Region functional(c) >= 0 of one AffineConstraint"""
    constraint: object

    @property
    def functional(self):
        return self.constraint.functional

    @property
    def norm(self):
        return self.functional.normal_norm()

    def unit(self):
        """(n, b) scaled to a unit normal; value() of the result is a signed distance"""
        return self.functional.as_array() / self.norm

    def value(self, c):
        return self.functional.value(c) / self.norm

    def direction(self):
        """Boundary direction that keeps the region on the left"""
        f = self.functional
        return np.array([f.a_minus, -f.a_plus]) / self.norm


@dataclass
class FacetBoundary:
    """
    Boundary of a (possibly unbounded) convex facet, counterclockwise.

    `segments[k]` is the (start, end) of `active[k]`, with None for an end at
    infinity. For an unbounded facet the first and last pieces are the rays.
    """
    active: list
    vertices: list
    bounded: bool
    rays: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    polygon: list = field(default_factory=list)

    def bounding_box(self):
        """(lo, hi) corners; unbounded directions extend to infinity"""
        pts = np.array([p for p in self.polygon]) if self.polygon else np.zeros((1, 2))
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        if not self.bounded:
            for _, direction in self.rays:
                for k in range(2):
                    if direction[k] > 0:
                        hi[k] = np.inf
                    elif direction[k] < 0:
                        lo[k] = -np.inf
        return lo, hi


def _tol_at(point, tol):
    return tol * (1.0 + float(np.max(np.abs(point))))


def constraint_intersection(h1, h2, tol_par=TOL_PARALLEL):
    """
    Point where both boundary lines meet

    Returns:
        tuple or None: (C+, C-), or PARALLEL when the lines do not cross
    """
    u1 = h1.unit()
    u2 = h2.unit()
    det = u1[0] * u2[1] - u1[1] * u2[0]
    if abs(det) <= tol_par:
        return PARALLEL
    c_plus = (-u1[2] * u2[1] + u2[2] * u1[1]) / det
    c_minus = (-u1[0] * u2[2] + u2[0] * u1[2]) / det
    return (float(c_plus), float(c_minus))


def _clip(points, labels, unit, label, tol):
    """
    Clip a convex counterclockwise polygon by unit . [c, 1] >= 0

    labels[k] names the constraint along the side points[k] -> points[k+1].
    """
    values = [unit[0] * p[0] + unit[1] * p[1] + unit[2] for p in points]
    inside = [v >= -_tol_at(p, tol) for v, p in zip(values, points)]
    if all(inside):
        return points, labels
    if not any(inside):
        return [], []

    out_points, out_labels = [], []
    n = len(points)
    for k in range(n):
        p, q = points[k], points[(k + 1) % n]
        fp, fq = values[k], values[(k + 1) % n]
        if inside[k]:
            out_points.append(p)
            out_labels.append(labels[k])
            if not inside[(k + 1) % n]:
                t = min(max(fp / (fp - fq), 0.0), 1.0)
                out_points.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
                out_labels.append(label)
        elif inside[(k + 1) % n]:
            t = min(max(fp / (fp - fq), 0.0), 1.0)
            out_points.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
            out_labels.append(labels[k])
    return out_points, out_labels


def _drop_short_sides(points, labels, tol):
    """Remove zero-length sides left behind by tolerance-band clipping"""
    changed = True
    while changed and len(points) > 1:
        changed = False
        n = len(points)
        for k in range(n):
            p, q = points[k], points[(k + 1) % n]
            if np.hypot(q[0] - p[0], q[1] - p[1]) <= _tol_at(p, tol):
                # side k is degenerate: its start vertex goes, the next side keeps q
                del points[k]
                del labels[k]
                changed = True
                break
    return points, labels


def _merge_collinear(points, labels):
    """Consecutive sides carrying the same label form one side"""
    n = len(points)
    if n < 2:
        return points, labels
    keep = [k for k in range(n) if labels[k] is None or labels[k] is not labels[k - 1]]
    if not keep:
        return points, labels
    return [points[k] for k in keep], [labels[k] for k in keep]


def _exact_corners(points, labels, tol_par):
    """
    Recompute each corner between two constraint sides from their lines

    Clipped corners are interpolated along window-sized sides and carry
    errors of order extent * eps. Corners next to a window side keep their
    clipped position, and so do corners whose lines are too close to
    parallel to move the point less than the clipping error.
    """
    exact = list(points)
    for k in range(len(points)):
        before, after = labels[k - 1], labels[k]
        if before is None or after is None or before is after:
            continue
        point = constraint_intersection(before, after, tol_par)
        if point is PARALLEL:
            continue
        drift = max(abs(point[0] - points[k][0]), abs(point[1] - points[k][1]))
        if drift <= 1e-6 * (1.0 + max(abs(point[0]), abs(point[1]))):
            exact[k] = point
    return exact


def polygon_area(points):
    """Signed area (positive when counterclockwise)"""
    if len(points) < 3:
        return 0.0
    pts = np.asarray(points)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_convex_polygon(points, functionals, tol=TOL_FEAS):
    """Clip a convex counterclockwise polygon by functional(c) >= 0 for each functional"""
    points = [tuple(p) for p in points]
    labels = [None] * len(points)
    for functional in functionals:
        norm = functional.normal_norm()
        if norm == 0.0:
            if functional.b < 0:
                return []
            continue
        points, labels = _clip(points, labels, functional.as_array() / norm, functional, tol)
        if not points:
            return []
    return points


def _angle_key(h):
    f = h.functional
    return np.arctan2(f.a_minus, f.a_plus)


def intersect_halfplanes(constraints, mandatory=(), tol_feas=TOL_FEAS,
                         tol_par=TOL_PARALLEL, extent=PATH_EXTENT):
    """
    Intersect halfplanes into a convex facet boundary

    The region is clipped inside [-extent, extent]^2; window sides stand for
    infinity and are not reported as boundary pieces.

    Args:
        constraints (list): HalfPlane objects
        mandatory (list): HalfPlane objects known to be active, clipped first
        tol_feas (float): relative feasibility band
        tol_par (float): threshold below which a normal counts as zero
        extent (float): half width of the clipping window

    Returns:
        FacetBoundary: active pieces, vertices, rays
    """
    candidates = list(mandatory) + [h for h in constraints if h not in mandatory]
    scale = max([h.norm for h in candidates] + [1.0])

    sloped = []
    for h in candidates:
        if h.norm <= tol_par * scale:
            if h.functional.b < -tol_feas * max(1.0, abs(h.functional.b)):
                raise InfeasibleRegion(f"constant constraint {h.constraint} is negative")
            continue
        sloped.append(h)

    head = [h for h in sloped if h in mandatory]
    tail = sorted((h for h in sloped if h not in mandatory), key=_angle_key)

    R = float(extent)
    points = [(-R, -R), (R, -R), (R, R), (-R, R)]
    labels = [None, None, None, None]
    for h in head + tail:
        points, labels = _clip(points, labels, h.unit(), h, tol_feas)
        if not points:
            raise InfeasibleRegion("halfplane intersection is empty")

    points, labels = _drop_short_sides(points, labels, tol_feas)
    points, labels = _merge_collinear(points, labels)
    points = _exact_corners(points, labels, tol_par)
    if len(points) < 3:
        raise EmptyInterior(f"facet collapses to {len(points)} point(s)")
    area = polygon_area(points)
    perimeter = sum(np.hypot(points[(k + 1) % len(points)][0] - points[k][0],
                             points[(k + 1) % len(points)][1] - points[k][1])
                    for k in range(len(points)))
    width_tol = _tol_at(max(points, key=lambda p: max(abs(p[0]), abs(p[1]))), tol_feas)
    if area <= 0.0 or 2.0 * area / perimeter <= width_tol:
        raise EmptyInterior(f"facet has no interior (area {area:.3e})")

    boundary = _assemble(points, labels)
    missing = [h for h in mandatory if h not in boundary.active]
    if missing:
        logger.warning(f"{len(missing)} mandatory constraint(s) did not reach the boundary")
    return boundary


def _assemble(points, labels):
    n = len(points)
    if all(label is not None for label in labels):
        active = list(labels)
        segments = [(points[k], points[(k + 1) % n]) for k in range(n)]
        return FacetBoundary(active=active, vertices=list(points), bounded=True,
                             rays=[], segments=segments, polygon=list(points))

    # start right after the sides that lie on the window
    start = next(k for k in range(n) if labels[k] is not None and labels[k - 1] is None) \
        if any(label is not None for label in labels) else 0
    order = [(start + k) % n for k in range(n)]
    chain = []
    for k in order:
        if labels[k] is None:
            if chain:
                break
            continue
        chain.append(k)
    if sum(1 for k in range(n) if labels[k] is not None and labels[k - 1] is None) > 1:
        logger.warning("open facet has more than one window run; keeping the first chain")

    active = [labels[k] for k in chain]
    segments = []
    for j, k in enumerate(chain):
        begin = None if j == 0 else points[k]
        end = None if j == len(chain) - 1 else points[(k + 1) % n]
        segments.append((begin, end))
    vertices = [points[k] for k in chain[1:]]

    rays = []
    if active:
        first, last = active[0], active[-1]
        anchor_first = segments[0][1] if segments[0][1] is not None else _foot(first)
        anchor_last = segments[-1][0] if segments[-1][0] is not None else _foot(last)
        rays = [(anchor_first, tuple(-first.direction())), (anchor_last, tuple(last.direction()))]
    return FacetBoundary(active=active, vertices=vertices, bounded=False,
                         rays=rays, segments=segments, polygon=list(points))


def _foot(h):
    """Point of the boundary line closest to the origin"""
    u = h.unit()
    return (float(-u[2] * u[0]), float(-u[2] * u[1]))


def contains(fb, c, tol=TOL_FEAS):
    """
    Classify a point against a facet boundary

    Returns:
        Location: INSIDE, BOUNDARY or OUTSIDE
    """
    band = _tol_at(c, tol)
    values = [h.value(c) for h in fb.active]
    if all(v > band for v in values):
        return Location.INSIDE
    if all(v >= -band for v in values):
        return Location.BOUNDARY
    return Location.OUTSIDE


def touching(halfplanes, point, tol=TOL_FEAS):
    """Halfplanes whose boundary line passes through the point within the band"""
    band = _tol_at(point, tol)
    return [h for h in halfplanes if h.norm > 0.0 and abs(h.value(point)) <= band]


def coincident(h1, h2, tol):
    """True when both halfplanes have the same boundary line and side"""
    u1, u2 = h1.unit(), h2.unit()
    return bool(np.all(np.abs(u1[:2] - u2[:2]) <= tol)) and abs(u1[2] - u2[2]) <= tol * (1.0 + abs(u1[2]))
