# errors.py
"""Exceptions raised by the path explorer and its tools"""


class PathError(Exception):
    """Base class for all errors raised by acpath"""


class SingularGram(PathError):
    """Margin-set Gram matrix is numerically rank deficient"""


class InconsistentEvent(PathError):
    """Sample's current set does not admit the requested transition"""


class EmptyInterior(PathError):
    """Halfplane intersection has no interior (degenerate facet)"""


class InfeasibleRegion(PathError):
    """Halfplane intersection is empty"""


class DanglingReference(PathError):
    """A connectivity link points at an object that no longer exists"""


class LoopViolation(PathError):
    """The two joint events at a vertex do not close the vertex loop"""


class AmbiguousSeed(PathError):
    """Seed point lies within the tolerance band of a facet boundary"""


class LayerBudgetExceeded(PathError):
    """Exploration hit max_layers; carries the partial graph"""

    def __init__(self, message, graph=None):
        super().__init__(message)
        self.graph = graph


class MaxIterExceeded(PathError):
    """Dual solver ran out of iterations; carries the best iterate"""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class UnexploredPoint(PathError):
    """Query point lies in an unexplored region"""


class BoundaryPoint(PathError):
    """Query point lies on the boundary between facets"""

    def __init__(self, message, facet_ids=()):
        super().__init__(message)
        self.facet_ids = list(facet_ids)


class DimensionMismatch(PathError):
    """Sample dimension does not match the model"""


class ParseError(PathError):
    """Malformed dataset line"""

    def __init__(self, message, line=None, column=None):
        location = f"line {line}, column {column}: " if line is not None else ''
        super().__init__(f"{location}{message}")
        self.line = line
        self.column = column


class EmptyClass(PathError):
    """One of the two classes has no samples"""


class ConfigError(PathError):
    """Invalid exploration settings"""
