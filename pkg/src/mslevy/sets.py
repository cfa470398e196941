"""Symbolic subsets of [0, 1] and the deterministic dimension predictors.

The supported algebra is small on purpose: closed intervals, points, middle
Cantor sets and finite disjoint unions of those. Each has a known Hausdorff
dimension, which is what the partition formulas below need.
"""
from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, EmptySetError

MAX_POINTS = 2 ** 24
_EPS = 1e-12


class Empty:
    """The empty set. A singleton; compare with ``is EMPTY``."""

    def __repr__(self):
        return "EMPTY"


EMPTY = Empty()


@dataclass(frozen=True)
class Point:
    a: float


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        _check_endpoints(self.a, self.b)


@dataclass(frozen=True)
class MiddleCantor:
    """Middle-``lam`` Cantor set on [a, b]: each step removes the open middle
    fraction ``lam`` of every remaining interval."""

    a: float
    b: float
    lam: float

    def __post_init__(self):
        _check_endpoints(self.a, self.b)
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"gap ratio must lie in (0, 1), got {self.lam}")

    @property
    def ratio(self):
        """Length ratio of each child interval to its parent."""
        return 0.5 * (1.0 - self.lam)


@dataclass(frozen=True)
class FiniteUnion:
    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple(sorted(self.members, key=lambda m: convex_hull(m)[0]))
        object.__setattr__(self, "members", members)
        for left, right in zip(members, members[1:]):
            if convex_hull(left)[1] >= convex_hull(right)[0]:
                raise ValueError("union members must be pairwise disjoint")


def _check_endpoints(a, b):
    if not (0.0 <= a <= b <= 1.0):
        raise ValueError(f"need 0 <= a <= b <= 1, got [{a}, {b}]")


class Cell(NamedTuple):
    """An interval of [0, 1] with explicit endpoint closedness."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def contains(self, x):
        above = x >= self.lo - _EPS if self.lo_closed else x > self.lo + _EPS
        below = x <= self.hi + _EPS if self.hi_closed else x < self.hi - _EPS
        return above and below

    def covers(self, x, y):
        return self.contains(x) and self.contains(y)


@dataclass(frozen=True)
class PartitionSpec:
    """Uniform partition of [0, 1] into n cells [i/n, (i+1)/n), last closed."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("partition needs at least one cell")

    @property
    def mesh(self):
        return 1.0 / self.n

    def cell(self, i):
        return Cell(i / self.n, (i + 1) / self.n, True, i == self.n - 1)

    def cells(self):
        return [self.cell(i) for i in range(self.n)]


def is_empty(e):
    return e is EMPTY or (isinstance(e, FiniteUnion) and not e.members)


def _normalise(e):
    if isinstance(e, Interval) and e.a == e.b:
        return Point(e.a)
    if isinstance(e, MiddleCantor) and e.a == e.b:
        return Point(e.a)
    return e


def cantor_dim(lam):
    return math.log(2.0) / math.log(2.0 / (1.0 - lam))


def exact_dim(e):
    """Hausdorff dimension for the supported set algebra; dim(empty) = 0."""
    e = _normalise(e)
    if is_empty(e) or isinstance(e, Point):
        return 0.0
    if isinstance(e, Interval):
        return 1.0
    if isinstance(e, MiddleCantor):
        return cantor_dim(e.lam)
    if isinstance(e, FiniteUnion):
        return max(exact_dim(m) for m in e.members)
    raise TypeError(f"unsupported set {e!r}")


def convex_hull(e):
    """(inf e, sup e)."""
    e = _normalise(e)
    if is_empty(e):
        raise EmptySetError("convex hull of the empty set")
    if isinstance(e, Point):
        return (e.a, e.a)
    if isinstance(e, (Interval, MiddleCantor)):
        return (e.a, e.b)
    if isinstance(e, FiniteUnion):
        return (convex_hull(e.members[0])[0], convex_hull(e.members[-1])[1])
    raise TypeError(f"unsupported set {e!r}")


def _union(parts):
    parts = [p for p in parts if not is_empty(p)]
    if not parts:
        return EMPTY
    if len(parts) == 1:
        return parts[0]
    return FiniteUnion(tuple(parts))


def _as_cell(cell):
    if isinstance(cell, Cell):
        return cell
    lo, hi = cell
    return Cell(float(lo), float(hi))


def _cantor_depth(e, cell):
    width = max(cell.hi - cell.lo, 1e-300)
    scale = max(e.b - e.a, 1e-300)
    return int(math.ceil(math.log(scale / width) / math.log(1.0 / e.ratio))) + 8 if width < scale else 8


def _intersect_cantor(e, cell):
    depth = max(_cantor_depth(e, cell), 0)
    rho = e.ratio
    found = []
    stack = [(e.a, e.b, 0)]
    while stack:
        x, y, d = stack.pop()
        if cell.covers(x, y):
            found.append(MiddleCantor(x, y, e.lam) if y > x else Point(x))
            continue
        # disjoint, possibly touching at one point
        if y < cell.lo - _EPS or x > cell.hi + _EPS:
            continue
        if abs(y - cell.lo) <= _EPS or abs(x - cell.hi) <= _EPS:
            for p in (x, y):
                if cell.contains(p):
                    found.append(Point(p))
            continue
        if d >= depth:
            # unresolved boundary piece: keep its endpoints that fall inside
            for p in (x, y):
                if cell.contains(p):
                    found.append(Point(p))
            continue
        step = rho * (y - x)
        stack.append((y - step, y, d + 1))
        stack.append((x, x + step, d + 1))
    uniq = {}
    for f in found:
        uniq[(convex_hull(f), type(f).__name__)] = f
    return _union(sorted(uniq.values(), key=lambda m: convex_hull(m)[0]))


def intersect(e, cell):
    """Return e intersected with ``cell`` as a SetSpec.

    ``cell`` is a :class:`Cell` or a closed ``(lo, hi)`` pair. Cantor sets
    are resolved by descending the construction tree; pieces still cut by
    the cell boundary at the maximum depth are kept only through their
    endpoints.
    """
    cell = _as_cell(cell)
    e = _normalise(e)
    if is_empty(e):
        return EMPTY
    if isinstance(e, Point):
        return e if cell.contains(e.a) else EMPTY
    if isinstance(e, Interval):
        lo, hi = max(e.a, cell.lo), min(e.b, cell.hi)
        if hi - lo > _EPS:
            return Interval(lo, hi)
        if abs(hi - lo) <= _EPS and cell.contains(lo) and e.a - _EPS <= lo <= e.b + _EPS:
            return Point(lo)
        return EMPTY
    if isinstance(e, MiddleCantor):
        return _intersect_cantor(e, cell)
    if isinstance(e, FiniteUnion):
        parts = []
        for m in e.members:
            sub = intersect(m, cell)
            if isinstance(sub, FiniteUnion):
                parts.extend(sub.members)
            else:
                parts.append(sub)
        return _union(parts)
    raise TypeError(f"unsupported set {e!r}")


def _cantor_points(e, level):
    left = np.array([e.a])
    length = e.b - e.a
    rho = e.ratio
    for _ in range(level):
        length_child = rho * length
        left = np.concatenate([left, left + (length - length_child)])
        length = length_child
    left.sort()
    # rounding in the offsets can step a hair outside [a, b]
    return np.clip(np.sort(np.concatenate([left, left + length])), e.a, e.b)


def point_count(e, level):
    """Number of points :func:`approximate` returns, before de-duplication."""
    e = _normalise(e)
    if is_empty(e):
        return 0
    if isinstance(e, Point):
        return 1
    if isinstance(e, Interval):
        return 2 ** level + 1
    if isinstance(e, MiddleCantor):
        return 2 ** (level + 1)
    return sum(point_count(m, level) for m in e.members)


def approximate(e, level):
    """Sorted finite point list standing in for ``e`` at construction level ``level``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    count = point_count(e, level)
    if count > MAX_POINTS:
        raise CapacityError(f"{count} points exceed the guard of {MAX_POINTS}")
    e = _normalise(e)
    if is_empty(e):
        return np.empty(0)
    if isinstance(e, Point):
        return np.array([e.a])
    if isinstance(e, Interval):
        return np.linspace(e.a, e.b, 2 ** level + 1)
    if isinstance(e, MiddleCantor):
        return _cantor_points(e, level)
    return np.unique(np.concatenate([approximate(m, level) for m in e.members]))


def _fill_level(e, lipschitz, target=1e-6):
    """Smallest level at which every point of e is within target/lipschitz
    of an approximation point."""
    if lipschitz == 0.0:
        return 0
    reach = target / lipschitz
    e = _normalise(e)
    if isinstance(e, Interval):
        return max(0, int(math.ceil(math.log2(max((e.b - e.a) / reach, 1.0)))))
    if isinstance(e, MiddleCantor):
        return max(0, int(math.ceil(math.log(max((e.b - e.a) / reach, 1.0)) / math.log(1.0 / e.ratio))))
    if isinstance(e, FiniteUnion):
        return max(_fill_level(m, lipschitz, target) for m in e.members)
    return 0


def alpha_bounds(alpha, e):
    """(inf, sup) of alpha over e.

    Constant and affine alpha are monotone, so the extremes sit at the ends
    of the convex hull. Otherwise alpha is sampled on an approximation fine
    enough that the Lipschitz bound keeps the error below 1e-6.
    """
    if is_empty(e):
        raise EmptySetError("alpha bounds over the empty set")
    lo, hi = convex_hull(e)
    if alpha.kind in ("constant", "affine"):
        a, b = alpha.eval(lo), alpha.eval(hi)
        return (min(a, b), max(a, b))
    level = _fill_level(e, alpha.lipschitz_bound)
    while point_count(e, level) > MAX_POINTS:
        level -= 1
    vals = alpha.eval(approximate(e, level))
    return (float(np.min(vals)), float(np.max(vals)))


def hull_alpha_bounds(alpha, e):
    """(inf, sup) of alpha over the convex hull of e."""
    lo, hi = convex_hull(e)
    return alpha_bounds(alpha, Interval(lo, hi) if hi > lo else Point(lo))


def d_star(alpha, e):
    return max(1.0, alpha_bounds(alpha, e)[0]) * exact_dim(e)


def d_upper_star(alpha, e):
    return max(1.0, alpha_bounds(alpha, e)[1]) * exact_dim(e)


VARIANTS = ("d_*", "d^*", "alpha_*.dim", "alpha^*.dim", "alpha_*(c).dim", "alpha^*(c).dim")


@dataclass
class DimReport:
    """Per-n maxima of a cell quantity over uniform partitions, and their limit."""

    variant: str
    nseq: list
    values: list
    limit: float
    dim: float
    converged: bool
    warnings: list = field(default_factory=list)
    companion: "DimReport | None" = None

    def to_dict(self):
        out = {
            "variant": self.variant, "nseq": list(self.nseq), "values": list(self.values),
            "limit": self.limit, "dim": self.dim, "converged": self.converged,
            "warnings": list(self.warnings),
        }
        if self.companion is not None:
            out["companion"] = self.companion.to_dict()
        return out


def _cell_quantities(alpha, sub):
    if is_empty(sub):
        return dict.fromkeys(VARIANTS, 0.0)
    dim = exact_dim(sub)
    a_lo, a_hi = alpha_bounds(alpha, sub)
    c_lo, c_hi = hull_alpha_bounds(alpha, sub)
    return {
        "d_*": max(1.0, a_lo) * dim,
        "d^*": max(1.0, a_hi) * dim,
        "alpha_*.dim": a_lo * dim,
        "alpha^*.dim": a_hi * dim,
        "alpha_*(c).dim": c_lo * dim,
        "alpha^*(c).dim": c_hi * dim,
    }


def _scan(alpha, e, nseq, variants):
    if is_empty(e):
        raise EmptySetError("partition scan over the empty set")
    nseq = [int(n) for n in nseq]
    if any(b <= a for a, b in zip(nseq, nseq[1:])):
        raise ValueError("nseq must be strictly increasing")
    lo, hi = convex_hull(e)
    table = {v: [] for v in variants}
    for n in nseq:
        part = PartitionSpec(n)
        best = dict.fromkeys(variants, 0.0)
        first = max(0, int(math.floor(lo * n)) - 1)
        last = min(n - 1, int(math.floor(hi * n)) + 1)
        for i in range(first, last + 1):
            sub = intersect(e, part.cell(i))
            if is_empty(sub):
                continue
            q = _cell_quantities(alpha, sub)
            for v in variants:
                best[v] = max(best[v], q[v])
        for v in variants:
            table[v].append(best[v])
    return nseq, table


def _report(alpha, variant, nseq, values):
    tol = alpha.lipschitz_bound / min(nseq[-3:]) + 1e-9
    tail = values[-3:]
    converged = len(values) >= 3 and max(tail) - min(tail) <= tol
    warnings = [] if converged else [
        f"{variant}: last values {tail} spread more than {tol:.3g}"]
    limit = values[-1]
    return DimReport(variant, nseq, values, limit, min(1.0, limit), converged, warnings)


def predict_dim_Z(alpha, e, nseq):
    """Partition-formula dimension of Z(E): min(1, lim max_i alpha^*(E∩A_i) dim(E∩A_i))."""
    nseq, table = _scan(alpha, e, nseq, ("alpha^*.dim",))
    return _report(alpha, "alpha^*.dim", nseq, table["alpha^*.dim"])


def x_formula_warnings(alpha, e):
    """Hypotheses of the X-image formula that this (alpha, E) pair violates."""
    out = []
    if convex_hull(e)[0] <= 0.0:
        out.append("hypothesis: inf E > 0 fails")
    if not alpha.is_monotone():
        out.append("hypothesis: |t-s|/|alpha(t)-alpha(s)| may be unbounded on cells "
                   "(alpha not strictly monotone)")
    return out


def predict_dim_X(alpha, e, nseq):
    """Partition-formula dimension of X(E) with d^*; the d_* sequence rides
    along as ``companion``."""
    nseq, table = _scan(alpha, e, nseq, ("d^*", "d_*"))
    rep = _report(alpha, "d^*", nseq, table["d^*"])
    rep.companion = _report(alpha, "d_*", nseq, table["d_*"])
    rep.warnings.extend(x_formula_warnings(alpha, e))
    return rep


def lemma3_scan(alpha, e, nseq):
    """All six partition sequences, keyed by variant name."""
    nseq, table = _scan(alpha, e, nseq, VARIANTS)
    return {v: _report(alpha, v, nseq, table[v]) for v in VARIANTS}


def spread_check(scan):
    """Per-n spreads of the paired sequences against K * mesh."""
    pairs = [("d^*", "d_*"), ("alpha^*.dim", "alpha_*.dim"), ("alpha^*(c).dim", "alpha_*(c).dim")]
    first = next(iter(scan.values()))
    out = []
    for j, n in enumerate(first.nseq):
        row = {"n": n, "mesh": 1.0 / n}
        for upper, lower in pairs:
            row[f"{upper} - {lower}"] = scan[upper].values[j] - scan[lower].values[j]
        out.append(row)
    return out
