# reporting/svg_renderer.py
import logging

from lxml import etree

from config import EVENT_COLOURS, LAYER_COLOURS, SVG_SIZE
from geometry.polytope2d import clip_convex_polygon
from numerics.kkt_constraints import AffineFunctional
from regpath.path_graph import event_path, facet_mean

logger = logging.getLogger(__name__)

SVG_NS = 'http://www.w3.org/2000/svg'


def _tag(name):
    return f"{{{SVG_NS}}}{name}"


class SvgCanvas:
    """Maps the (C+, C-) window onto an SVG viewport with C- pointing up"""

    def __init__(self, window, size=SVG_SIZE):
        if window[0] <= 0 or window[1] <= 0:
            raise ValueError(f"window must be positive, got {window}")
        self.window = (float(window[0]), float(window[1]))
        self.size = int(size)
        self.root = etree.Element(
            _tag('svg'), nsmap={None: SVG_NS}, version='1.1',
            width=f"{self.size}px", height=f"{self.size}px",
            viewBox=f"0 0 {self.size} {self.size}")

    def to_screen(self, p):
        return (p[0] / self.window[0] * self.size, self.size - p[1] / self.window[1] * self.size)

    def group(self, name):
        return etree.SubElement(self.root, _tag('g'), id=name)

    def polygon(self, parent, points, **attributes):
        if len(points) < 3:
            return None
        screen = [self.to_screen(p) for p in points]
        d = f"M{screen[0][0]:.3f} {screen[0][1]:.3f}" + ''.join(f"L{x:.3f} {y:.3f}" for x, y in screen[1:]) + 'z'
        return etree.SubElement(parent, _tag('path'), d=d, **attributes)

    def line(self, parent, a, b, **attributes):
        (x1, y1), (x2, y2) = self.to_screen(a), self.to_screen(b)
        return etree.SubElement(parent, _tag('line'), x1=f"{x1:.3f}", y1=f"{y1:.3f}",
                                x2=f"{x2:.3f}", y2=f"{y2:.3f}", **attributes)

    def dot(self, parent, p, radius=2.5, **attributes):
        x, y = self.to_screen(p)
        return etree.SubElement(parent, _tag('circle'), cx=f"{x:.3f}", cy=f"{y:.3f}", r=str(radius), **attributes)

    def tostring(self):
        return etree.tostring(self.root, pretty_print=True, xml_declaration=True, encoding='UTF-8').decode('utf-8')


def _clip_segment(a, b, window):
    """Liang-Barsky clip of a segment to [0, W+] x [0, W-]"""
    t0, t1 = 0.0, 1.0
    dx, dy = b[0] - a[0], b[1] - a[1]
    for p, q in ((-dx, a[0]), (dx, window[0] - a[0]), (-dy, a[1]), (dy, window[1] - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return None
    return (a[0] + t0 * dx, a[1] + t0 * dy), (a[0] + t1 * dx, a[1] + t1 * dy)


def render_svg(graph, window, show_means=True, event_samples=(), size=SVG_SIZE):
    """
    Draw the facet tiling inside a window

    Args:
        graph (PathGraph): explored path
        window (tuple): (C+ max, C- max)
        show_means (bool): dot at the mean of each bounded facet
        event_samples (iterable): samples whose event paths are overlaid
        size (int): viewport size in pixels

    Returns:
        str: SVG 1.1 document
    """
    canvas = SvgCanvas(window, size)
    window_sides = [
        AffineFunctional(-1.0, 0.0, canvas.window[0]),
        AffineFunctional(0.0, -1.0, canvas.window[1]),
        AffineFunctional(1.0, 0.0, 0.0),
        AffineFunctional(0.0, 1.0, 0.0),
    ]

    facets = canvas.group('facets')
    drawn = 0
    for facet_id in sorted(graph.facets):
        facet = graph.facets[facet_id]
        if facet.boundary is None:
            continue
        clipped = clip_convex_polygon(facet.boundary.polygon, window_sides)
        colour = LAYER_COLOURS[facet.layer % len(LAYER_COLOURS)]
        if canvas.polygon(facets, clipped, fill=colour, stroke='#424242', **{'stroke-width': '0.5'},
                          id=f"facet-{facet_id}") is not None:
            drawn += 1

    if show_means:
        means = canvas.group('means')
        for facet_id in sorted(graph.facets):
            mean = facet_mean(graph, facet_id)
            if mean is not None and 0 <= mean[0] <= canvas.window[0] and 0 <= mean[1] <= canvas.window[1]:
                canvas.dot(means, mean, fill='red')

    if event_samples:
        paths = canvas.group('events')
        for sample in event_samples:
            for piece in event_path(graph, sample, extent=4.0 * max(canvas.window)):
                segment = _clip_segment(piece['start'], piece['end'], canvas.window)
                if segment is None:
                    continue
                canvas.line(paths, segment[0], segment[1], stroke=EVENT_COLOURS[piece['t']],
                            **{'stroke-width': '1.5', 'data-sample': str(sample)})

    logger.debug(f"Rendered {drawn} facets in window {canvas.window}")
    return canvas.tostring()


def write_svg(graph, path, window, **options):
    document = render_svg(graph, window, **options)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(document)
    logger.info(f"Wrote SVG to {path}")
