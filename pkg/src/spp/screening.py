"""Safe screening and safe pattern pruning.

Every bound here upper-bounds ``|x_j^T alpha*|`` for the (unknown) dual
optimum using one or two gap-safe balls ``||alpha - alpha_ref|| <= r`` with
``r = sqrt(2 gamma gap)``, intersected with the hyperplane ``sum(alpha) = 0``.

Scores are computed from three support sums per reference (total, positive
part, negative part) and the support size, so they work directly on the
row lists produced by the enumeration tree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tree import PatternTree

logger = logging.getLogger(__name__)

DEGENERATE_DELTA = 1e-12


@dataclass(frozen=True)
class ScreeningBall:
    center: np.ndarray
    radius: float

    @classmethod
    def from_reference(cls, ref, gamma: float) -> "ScreeningBall":
        return cls(np.asarray(ref.alpha, dtype=float), math.sqrt(2.0 * gamma * max(ref.gap, 0.0)))


@dataclass(frozen=True)
class BallIntersection:
    """Reduced sphere-and-plane description of two intersecting spheres."""

    delta: np.ndarray
    delta_sq: float
    t: float
    center: np.ndarray
    radius: float
    c1_threshold: float
    c2_threshold: float


def _center_norm(count: int, n: int) -> float:
    """``||x - Pi_1(x)||`` for a 0/1 column with ``count`` ones."""
    return math.sqrt(max(count - count * count / n, 0.0))


def screening_score(column, ref, gamma: float) -> float:
    """Single-reference safe screening score ``u_j``."""
    n = len(ref.alpha)
    s, _, _ = kernels.support_sums(column.rows, ref.alpha)
    r = math.sqrt(2.0 * gamma * max(ref.gap, 0.0))
    return abs(s) + r * _center_norm(column.count, n)


def pruning_score(column, ref, gamma: float) -> float:
    """Single-reference safe pattern pruning score ``v_j`` (bounds the subtree)."""
    _, sp, sn = kernels.support_sums(column.rows, ref.alpha)
    r = math.sqrt(2.0 * gamma * max(ref.gap, 0.0))
    return max(sp, -sn) + r * math.sqrt(column.count)


def ball_intersection(b1: ScreeningBall, b2: ScreeningBall):
    """Intersection geometry of two balls' bounding spheres.

    Returns ``None`` when the pair is degenerate (coincident centers, one ball
    inside the other, or disjoint through round-off); callers then fall back
    to a single ball.
    """
    delta = b1.center - b2.center
    dsq = float(delta @ delta)
    d = math.sqrt(dsq)
    r1, r2 = b1.radius, b2.radius
    if d <= DEGENERATE_DELTA:
        return None
    if abs(r1 - r2) >= d:
        return None
    if r1 + r2 < d:
        logger.warning("screening balls do not intersect (|delta|=%g, r1+r2=%g); using smaller ball", d, r1 + r2)
        return None
    t = 0.5 * (1.0 + (r2 * r2 - r1 * r1) / dsq)
    # factored form of r2^2 - t^2 |delta|^2 avoids cancellation
    rad = math.sqrt(max((r2 - t * d) * (r2 + t * d), 0.0))
    c1 = (r2 * r2 - r1 * r1 - dsq) / (2.0 * r1) if r1 > 0 else -math.inf
    c2 = (r2 * r2 - r1 * r1 + dsq) / (2.0 * r2) if r2 > 0 else math.inf
    return BallIntersection(delta, dsq, t, t * b1.center + (1.0 - t) * b2.center, rad, c1, c2)


def single_ball_fallback(b1: ScreeningBall, b2: ScreeningBall) -> int:
    """Index (0 or 1) of the ball to use alone for a degenerate pair."""
    delta = b1.center - b2.center
    d = math.sqrt(float(delta @ delta))
    if d > DEGENERATE_DELTA:
        if b2.radius >= b1.radius + d:
            return 0
        if b1.radius >= b2.radius + d:
            return 1
    return 0 if b1.radius <= b2.radius else 1


class PairGeometry:
    """Precomputed two-ball data reused for every column of a traversal."""

    def __init__(self, ref1, ref2, gamma: float):
        self.b1 = ScreeningBall.from_reference(ref1, gamma)
        self.b2 = ScreeningBall.from_reference(ref2, gamma)
        self.n = len(self.b1.center)
        self.inter = ball_intersection(self.b1, self.b2)
        self.fallback = None if self.inter is not None else single_ball_fallback(self.b1, self.b2)

    def score(self, s1: float, s2: float, count: int):
        """``(u', branch_plus, branch_minus)`` from support sums of each center.

        Branch labels: ``"C1"``, ``"C2"``, ``"other"``, or ``"single"`` for a
        degenerate pair.
        """
        zn = _center_norm(count, self.n)
        if self.inter is None:
            b = (self.b1, self.b2)[self.fallback]
            s = (s1, s2)[self.fallback]
            return abs(s) + b.radius * zn, "single", "single"
        plus, bp = self._side(s1, s2, zn)
        minus, bm = self._side(-s1, -s2, zn)
        return max(plus, minus), bp, bm

    def _side(self, a1: float, a2: float, zn: float):
        it = self.inter
        r1, r2 = self.b1.radius, self.b2.radius
        if zn <= 1e-15:
            # column parallel to the ones vector: a^T alpha is 0 on the hyperplane
            logger.debug("column proportional to ones vector in two-ball screening")
            return it.t * a1 + (1.0 - it.t) * a2, "other"
        ad = a1 - a2
        # maximizer over B1 lies in B2 / maximizer over B2 lies in B1
        if it.delta_sq + 2.0 * r1 * ad / zn + r1 * r1 <= r2 * r2:
            return a1 + r1 * zn, "C1"
        if it.delta_sq - 2.0 * r2 * ad / zn + r2 * r2 <= r1 * r1:
            return a2 + r2 * zn, "C2"
        resid = max(zn * zn - ad * ad / it.delta_sq, 0.0)
        return it.t * a1 + (1.0 - it.t) * a2 + it.radius * math.sqrt(resid), "other"


def multi_screening_score(column, ref1, ref2, gamma: float, return_branch: bool = False):
    """Two-reference screening score ``u'_j`` (max of ``|x^T alpha|`` over both balls)."""
    geo = PairGeometry(ref1, ref2, gamma)
    s1, _, _ = kernels.support_sums(column.rows, geo.b1.center)
    s2, _, _ = kernels.support_sums(column.rows, geo.b2.center)
    value, bp, bm = geo.score(s1, s2, column.count)
    if return_branch:
        return value, (bp, bm)
    return value


def multi_pruning_score(column, ref1, ref2, gamma: float) -> float:
    return min(pruning_score(column, ref1, gamma), pruning_score(column, ref2, gamma))


@dataclass
class TraversalStats:
    visited: int = 0
    pruned: int = 0
    screened: int = 0

    def add(self, other: "TraversalStats") -> None:
        self.visited += other.visited
        self.pruned += other.pruned
        self.screened += other.screened


class Screener:
    """Bounds for one or two references, evaluated on tree nodes."""

    def __init__(self, refs, gamma: float):
        if not 1 <= len(refs) <= 2:
            raise ValueError("screening uses one or two references")
        usable = [r for r in refs if math.isfinite(r.gap)]
        # an infinite gap gives an unbounded ball; with none left nothing is removed
        self.blind = not usable
        refs = usable or refs[:1]
        self.alphas = [np.ascontiguousarray(r.alpha, dtype=float) for r in refs]
        self.radii = [math.sqrt(2.0 * gamma * max(r.gap, 0.0)) if not self.blind else 0.0 for r in refs]
        self.n = len(self.alphas[0])
        self.pair = PairGeometry(refs[0], refs[1], gamma) if len(refs) == 2 else None

    def scores(self, rows):
        """``(v, u)``: pruning bound for the subtree and screening bound for the node."""
        if self.blind:
            return math.inf, math.inf
        count = rows.shape[0]
        sums = [kernels.support_sums(rows, a) for a in self.alphas]
        sq = math.sqrt(count)
        v = min(max(sp, -sn) + r * sq for (_, sp, sn), r in zip(sums, self.radii))
        if self.pair is None:
            u = abs(sums[0][0]) + self.radii[0] * _center_norm(count, self.n)
        else:
            u = self.pair.score(sums[0][0], sums[1][0], count)[0]
        return v, u

    def screen(self, rows) -> float:
        return self.scores(rows)[1]


def spp_traverse(dataset, lam: float, refs, gamma: float, max_len: int, trace=None, check: bool = False):
    """Safe pattern pruning over the enumeration tree.

    Depth-first from the empty pattern: a child whose pruning score is below
    ``lam`` is dropped with its whole subtree; otherwise it joins the active
    set when its screening score is at least ``lam``, and is expanded.

    ``trace(event, items)`` is called with ``"pruned"`` or ``"screened"`` for
    every removed node.  Returns ``(active nodes, TraversalStats)``.
    """
    tree = PatternTree(dataset, max_len, check=check)
    screener = Screener(refs, gamma)
    stats = TraversalStats()
    active = []
    stack = [(tree.root(), math.inf)]
    while stack:
        node, v_parent = stack.pop()
        children = tree.expand(node)
        kept = []
        for child in children:
            stats.visited += 1
            v, u = screener.scores(child.rows)
            if check:
                assert v <= v_parent + 1e-9, "pruning score increased along the tree"
            if v < lam:
                stats.pruned += 1
                if trace is not None:
                    trace("pruned", child.items)
                continue
            if u >= lam:
                active.append(child)
            else:
                stats.screened += 1
                if trace is not None:
                    trace("screened", child.items)
            kept.append((child, v))
        stack.extend(reversed(kept))
    return active, stats


def find_max_abs_inner(dataset, alpha, max_len: int, floor: float = 0.0):
    """Maximum of ``|x_j^T alpha|`` over all patterns, by best-first-ordered DFS.

    Subtrees whose bound ``max(sum of positive alpha, -sum of negative alpha)``
    cannot exceed ``max(best, floor)`` are skipped, so the value is exact when
    it exceeds ``floor`` and otherwise only certifies ``<= floor``.
    Returns ``(value, items)`` with ``items`` the maximizing pattern ids.
    """
    alpha = np.ascontiguousarray(alpha, dtype=float)
    tree = PatternTree(dataset, max_len)
    best, arg = 0.0, None
    stack = [(tree.root(), math.inf)]
    while stack:
        node, bound = stack.pop()
        if bound <= max(best, floor):
            continue
        scored = []
        for child in tree.expand(node):
            s, sp, sn = kernels.support_sums(child.rows, alpha)
            if abs(s) > best:
                best, arg = abs(s), child.items
            scored.append((max(sp, -sn), child))
        scored.sort(key=lambda bc: bc[0])
        for b, child in scored:
            if b > max(best, floor):
                stack.append((child, b))
    return best, arg


def conjugate_excess(dataset, alpha, lam: float, max_len: int):
    """``(max |x_j^T alpha| if above lam, sum_j max(|x_j^T alpha| - lam, 0)^2)``.

    Subtrees whose bound is at most ``lam`` contain no exceeding pattern.
    """
    alpha = np.ascontiguousarray(alpha, dtype=float)
    tree = PatternTree(dataset, max_len)
    best, total = 0.0, 0.0
    stack = [tree.root()]
    while stack:
        node = stack.pop()
        for child in tree.expand(node):
            s, sp, sn = kernels.support_sums(child.rows, alpha)
            a = abs(s)
            if a > lam:
                total += (a - lam) ** 2
            best = max(best, a)
            if max(sp, -sn) > lam:
                stack.append(child)
    return best, total
