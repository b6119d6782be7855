# numerics/kkt_constraints.py
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from config import TOL_RANK
from errors import InconsistentEvent
from numerics.linalg_core import (
    gram_factorize, gram_solve, project_residual, project_residual_dot, rank_of
)

logger = logging.getLogger(__name__)

SET_NAMES = ('M+', 'M-', 'I+', 'I-', 'O')


class ConstraintFamily(Enum):
    ALPHA_LOWER = 'alpha_lower'
    ALPHA_UPPER = 'alpha_upper'
    SCORE_I = 'score_i'
    SCORE_O = 'score_o'
    AXIS_CPLUS = 'axis_cplus'
    AXIS_CMINUS = 'axis_cminus'


AXIS_FAMILIES = (ConstraintFamily.AXIS_CPLUS, ConstraintFamily.AXIS_CMINUS)

# event type implied by each sample-carrying family
FAMILY_EVENT_TYPE = {
    ConstraintFamily.ALPHA_LOWER: 0,
    ConstraintFamily.SCORE_O: 0,
    ConstraintFamily.ALPHA_UPPER: 1,
    ConstraintFamily.SCORE_I: 1,
}


class Degeneracy(Enum):
    GENERIC = 'generic'
    MULTI_EVENT_EDGE = 'multi_event_edge'
    MULTI_JOINT_EVENT_VERTEX = 'multi_joint_event_vertex'


@dataclass(frozen=True)
class Event:
    """Transition of one sample: t = 0 for M <-> O, t = 1 for M <-> I"""
    sample: int
    t: int

    def __post_init__(self):
        if self.t not in (0, 1):
            raise ValueError(f"event type must be 0 or 1, got {self.t}")


@dataclass(frozen=True)
class ActiveSets:
    """
    Partition of the sample indices into M+, M-, I+, I-, O.

    Each set is a sorted tuple; positives are the indices below n_plus.
    """
    m_plus: tuple
    m_minus: tuple
    i_plus: tuple
    i_minus: tuple
    o: tuple
    n_plus: int

    def __post_init__(self):
        seen = set()
        for name, members in zip(SET_NAMES, self.groups()):
            if list(members) != sorted(members):
                raise ValueError(f"set {name} is not sorted")
            overlap = seen.intersection(members)
            if overlap:
                raise ValueError(f"samples {sorted(overlap)} appear in more than one set")
            seen.update(members)
        if seen != set(range(len(seen))):
            raise ValueError("sets do not partition 0..N-1")
        for i in self.m_plus + self.i_plus:
            if i >= self.n_plus:
                raise ValueError(f"negative sample {i} placed in a positive set")
        for i in self.m_minus + self.i_minus:
            if i < self.n_plus:
                raise ValueError(f"positive sample {i} placed in a negative set")

    @classmethod
    def build(cls, n_plus, m_plus=(), m_minus=(), i_plus=(), i_minus=(), o=()):
        return cls(
            tuple(sorted(int(i) for i in m_plus)),
            tuple(sorted(int(i) for i in m_minus)),
            tuple(sorted(int(i) for i in i_plus)),
            tuple(sorted(int(i) for i in i_minus)),
            tuple(sorted(int(i) for i in o)),
            int(n_plus),
        )

    @classmethod
    def origin(cls, n_samples, n_plus):
        """Every sample at its upper bound (the facet containing C = (0, 0))"""
        return cls.build(n_plus, i_plus=range(n_plus), i_minus=range(n_plus, n_samples))

    @classmethod
    def from_key(cls, key, n_plus):
        """Inverse of canonical_key"""
        parts = {}
        for chunk in key.split('|'):
            name, _, members = chunk.partition(':')
            parts[name] = [int(i) for i in members.split(',') if i != '']
        return cls.build(n_plus, parts.get('M+', ()), parts.get('M-', ()),
                         parts.get('I+', ()), parts.get('I-', ()), parts.get('O', ()))

    def groups(self):
        return (self.m_plus, self.m_minus, self.i_plus, self.i_minus, self.o)

    @property
    def n_samples(self):
        return sum(len(g) for g in self.groups())

    @cached_property
    def canonical_key(self):
        return '|'.join(
            f"{name}:{','.join(str(i) for i in members)}"
            for name, members in zip(SET_NAMES, self.groups())
        )

    @cached_property
    def margin(self):
        return tuple(sorted(self.m_plus + self.m_minus))

    @cached_property
    def _membership(self):
        lookup = {}
        for name, members in zip(SET_NAMES, self.groups()):
            for i in members:
                lookup[i] = name
        return lookup

    def membership(self, i):
        return self._membership[i]

    def with_moved(self, i, target):
        """Copy with sample i moved into the named set"""
        groups = {name: list(members) for name, members in zip(SET_NAMES, self.groups())}
        groups[self.membership(i)].remove(i)
        groups[target].append(i)
        return ActiveSets.build(self.n_plus, groups['M+'], groups['M-'],
                                groups['I+'], groups['I-'], groups['O'])


@dataclass(frozen=True)
class AffineFunctional:
    """c -> a_plus * C+ + a_minus * C- + b"""
    a_plus: float
    a_minus: float
    b: float

    def value(self, c):
        return self.a_plus * c[0] + self.a_minus * c[1] + self.b

    def as_array(self):
        return np.array([self.a_plus, self.a_minus, self.b])

    def normal_norm(self):
        return float(np.hypot(self.a_plus, self.a_minus))

    def scaled(self, k):
        return AffineFunctional(k * self.a_plus, k * self.a_minus, k * self.b)

    def __neg__(self):
        return self.scaled(-1.0)


@dataclass(frozen=True)
class AffineConstraint:
    """functional(c) >= 0, with the sample and family it came from"""
    functional: AffineFunctional
    family: ConstraintFamily
    sample: int = None
    event_type: int = None

    def __post_init__(self):
        if self.family in AXIS_FAMILIES:
            if self.sample is not None or self.event_type is not None:
                raise ValueError("axis constraints carry no sample or event")
        elif FAMILY_EVENT_TYPE[self.family] != self.event_type:
            raise ValueError(f"{self.family.name} requires event type {FAMILY_EVENT_TYPE[self.family]}")

    @property
    def is_axis(self):
        return self.family in AXIS_FAMILIES

    @property
    def event(self):
        if self.is_axis:
            return None
        return Event(self.sample, self.event_type)

    def value(self, c):
        return self.functional.value(c)


AXIS_CONSTRAINTS = (
    AffineConstraint(AffineFunctional(1.0, 0.0, 0.0), ConstraintFamily.AXIS_CPLUS),
    AffineConstraint(AffineFunctional(0.0, 1.0, 0.0), ConstraintFamily.AXIS_CMINUS),
)


def _upper_sums(sets, data):
    X = data.X
    s_plus = X[:, list(sets.i_plus)].sum(axis=1) if sets.i_plus else np.zeros(data.d)
    s_minus = X[:, list(sets.i_minus)].sum(axis=1) if sets.i_minus else np.zeros(data.d)
    return s_plus, s_minus


def factorize_margin(sets, data, tol_rank=TOL_RANK):
    """MarginFactorization for the facet's margin set, or None when it is empty"""
    if not sets.margin:
        return None
    return gram_factorize(data.X[:, list(sets.margin)], sets.margin, tol_rank)


def _alpha_coefficients(sets, data, f):
    s_plus, s_minus = _upper_sums(sets, data)
    X_M = data.X[:, list(f.margin_indices)]
    a_plus = -gram_solve(f, X_M.T @ s_plus)
    a_minus = -gram_solve(f, X_M.T @ s_minus)
    b = gram_solve(f, np.ones(f.size))
    return a_plus, a_minus, b


def alpha_path(sets, data, f):
    """
    Affine alpha_i(c) for every margin sample

    Args:
        sets (ActiveSets): facet configuration with nonempty margin
        data (Dataset): training data
        f (MarginFactorization): factorization built on the margin columns

    Returns:
        list: (sample index, AffineFunctional) in margin order
    """
    a_plus, a_minus, b = _alpha_coefficients(sets, data, f)
    return [
        (i, AffineFunctional(float(a_plus[k]), float(a_minus[k]), float(b[k])))
        for k, i in enumerate(f.margin_indices)
    ]


def score_terms(sets, data, f):
    """
    Shared pieces of every score functional of a facet

    Returns:
        tuple: (P_perp [s+, s-] as a d x 2 array, X_M G^-1 1 or None without a margin)
    """
    s_plus, s_minus = _upper_sums(sets, data)
    projected = project_residual(f, np.column_stack([s_plus, s_minus]))
    if f is None:
        return projected, None
    return projected, data.X[:, list(f.margin_indices)] @ gram_solve(f, np.ones(f.size))


def score_path(i, sets, data, f, terms=None):
    """
    Affine g_i(c) = x_i^T X alpha(c) for a sample outside the margin

    `terms` from score_terms() saves the per-facet work when many samples
    of the same facet are scored.
    """
    x_i = data.X[:, i]
    if terms is not None:
        projected, w = terms
        slopes = x_i @ projected
        constant = 0.0 if w is None else float(x_i @ w)
        return AffineFunctional(float(slopes[0]), float(slopes[1]), constant)
    s_plus, s_minus = _upper_sums(sets, data)
    if f is None:
        return AffineFunctional(float(x_i @ s_plus), float(x_i @ s_minus), 0.0)
    X_M = data.X[:, list(f.margin_indices)]
    constant = float((X_M.T @ x_i) @ gram_solve(f, np.ones(f.size)))
    return AffineFunctional(
        project_residual_dot(x_i, f, X_M, s_plus),
        project_residual_dot(x_i, f, X_M, s_minus),
        constant
    )


def build_constraints(sets, data, f=None, tol_rank=TOL_RANK):
    """
    Affine constraint system of a facet: the facet is where all are >= 0

    Args:
        sets (ActiveSets): facet configuration
        data (Dataset): training data
        f (MarginFactorization, optional): reuse an existing factorization

    Returns:
        list: AffineConstraint in the order margin, I, O, axes
    """
    if f is None:
        f = factorize_margin(sets, data, tol_rank)
    constraints = []

    if f is not None:
        a_plus, a_minus, b = _alpha_coefficients(sets, data, f)
        for k, i in enumerate(f.margin_indices):
            lower = AffineFunctional(float(a_plus[k]), float(a_minus[k]), float(b[k]))
            constraints.append(AffineConstraint(lower, ConstraintFamily.ALPHA_LOWER, i, 0))
            if data.is_positive(i):
                upper = AffineFunctional(1.0 - lower.a_plus, -lower.a_minus, -lower.b)
            else:
                upper = AffineFunctional(-lower.a_plus, 1.0 - lower.a_minus, -lower.b)
            constraints.append(AffineConstraint(upper, ConstraintFamily.ALPHA_UPPER, i, 1))

    outside = list(sets.i_plus + sets.i_minus + sets.o)
    if outside:
        terms = score_terms(sets, data, f)
        in_upper = set(sets.i_plus + sets.i_minus)
        for i in outside:
            g = score_path(i, sets, data, f, terms)
            if i in in_upper:
                constraints.append(AffineConstraint(
                    AffineFunctional(-g.a_plus, -g.a_minus, 1.0 - g.b), ConstraintFamily.SCORE_I, i, 1))
            else:
                constraints.append(AffineConstraint(
                    AffineFunctional(g.a_plus, g.a_minus, g.b - 1.0), ConstraintFamily.SCORE_O, i, 0))

    constraints.extend(AXIS_CONSTRAINTS)
    return constraints


def constraint_for_event(constraints, event):
    """The constraint of a facet whose activation triggers the given event"""
    for constraint in constraints:
        if constraint.sample == event.sample and constraint.event_type == event.t:
            return constraint
    return None


def alpha_at(sets, data, c, f=None):
    """
    Full dual vector of a facet at c: path values on M, bounds on I, zero on O

    Returns:
        np.ndarray: alpha of length N
    """
    alpha = np.zeros(data.n_samples)
    alpha[list(sets.i_plus)] = c[0]
    alpha[list(sets.i_minus)] = c[1]
    if sets.margin:
        if f is None:
            f = factorize_margin(sets, data)
        for i, functional in alpha_path(sets, data, f):
            alpha[i] = functional.value(c)
    return alpha


def apply_event(sets, e):
    """
    Move one sample across a breakpoint

    M <-> O for t = 0 and M <-> I for t = 1; the direction follows the
    sample's current set and its class side is kept.
    """
    where = sets.membership(e.sample)
    side = '+' if e.sample < sets.n_plus else '-'
    if e.t == 0:
        if where in ('M+', 'M-'):
            return sets.with_moved(e.sample, 'O')
        if where == 'O':
            return sets.with_moved(e.sample, 'M' + side)
    else:
        if where in ('M+', 'M-'):
            return sets.with_moved(e.sample, 'I' + side)
        if where in ('I+', 'I-'):
            return sets.with_moved(e.sample, 'M' + side)
    raise InconsistentEvent(f"sample {e.sample} in {where} admits no t={e.t} transition")


def joint_update(sets, e1, e2):
    """Apply two concurrent events of distinct samples"""
    if e1.sample == e2.sample:
        raise InconsistentEvent(f"joint events must refer to distinct samples, got {e1.sample} twice")
    return apply_event(apply_event(sets, e1), e2)


def apply_events(sets, events):
    """Apply several concurrent events of distinct samples in sequence"""
    samples = [e.sample for e in events]
    if len(set(samples)) != len(samples):
        raise InconsistentEvent(f"concurrent events repeat a sample: {samples}")
    for e in events:
        sets = apply_event(sets, e)
    return sets


def detect_degeneracy(constraints, tol=TOL_RANK):
    """
    Classify constraints that activate at a common locus

    Rank 1 of the stacked functionals means several events on one edge;
    rank 2 with a common point means several joint events at one vertex.
    """
    if len(constraints) < 2:
        return Degeneracy.GENERIC
    H = np.array([c.functional.as_array() for c in constraints])
    H = H / np.linalg.norm(H, axis=1, keepdims=True)
    rank = rank_of(H, tol)
    if rank == 1:
        return Degeneracy.MULTI_EVENT_EDGE
    if rank == 2 and len(constraints) >= 3:
        _, _, vt = np.linalg.svd(H)
        z = vt[-1]
        if abs(z[2]) > tol * np.linalg.norm(z):
            return Degeneracy.MULTI_JOINT_EVENT_VERTEX
    return Degeneracy.GENERIC


def flip_identity_holds(sets, event, data, rtol=1e-7):
    """
    Check that the constraint of an edge built on either adjacent facet is
    the other's negation up to a positive factor

    Returns:
        tuple: (holds, deviation)
    """
    across = apply_event(sets, event)
    here = constraint_for_event(build_constraints(sets, data), event)
    there = constraint_for_event(build_constraints(across, data), event)
    if here is None or there is None:
        return False, float('inf')
    return functionals_opposed(here.functional, there.functional, rtol)


def functionals_opposed(u, v, rtol=1e-7):
    """(holds, deviation) for u == -k v with k > 0, compared after normalising"""
    a = u.as_array()
    b = v.as_array()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return False, float('inf')
    deviation = float(np.max(np.abs(a / na + b / nb)))
    return deviation <= rtol, deviation
