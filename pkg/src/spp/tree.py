"""Pattern enumeration tree with PrefixSpan-style pseudo-projection.

A node stores its pattern, its support rows and, per supporting instance, the
flat index just past the leftmost embedding of the pattern.  For itemsets that
is the position after the last matched item, so children only extend with
larger ids; for sequences it is the standard pseudo-projection.  Children are
computed from the parent's projection alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset, Pattern, SupportColumn

DEFAULT_CEILING = 10**6


class EnumerationLimitError(RuntimeError):
    """Raised when exhaustive enumeration exceeds its configured ceiling."""


@dataclass(eq=False)
class PatternNode:
    items: tuple[int, ...]
    rows: np.ndarray
    pos: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.items)

    def pattern(self, kind: str) -> Pattern:
        return Pattern(kind, self.items)


class PatternTree:
    """Enumeration tree over the patterns of one dataset, depth-capped."""

    def __init__(self, dataset: Dataset, max_len: int, check: bool = False):
        if max_len < 1:
            raise ValueError("max pattern length must be >= 1")
        self.dataset = dataset
        self.max_len = max_len
        self.kind = dataset.structure
        self.check = check

    def root(self) -> PatternNode:
        ds = self.dataset
        return PatternNode((), np.arange(ds.n, dtype=np.int64), ds.indptr[:-1].copy())

    def expand(self, node: PatternNode) -> list[PatternNode]:
        if node.depth >= self.max_len:
            return []
        ds = self.dataset
        ids, offsets, rows, pos = kernels.project(
            ds.indptr, ds.items, node.rows, node.pos, ds.alphabet_size
        )
        children = []
        for c, t in enumerate(ids.tolist()):
            lo, hi = offsets[c], offsets[c + 1]
            child = PatternNode(node.items + (t,), rows[lo:hi], pos[lo:hi])
            if self.check:
                # child support must be a subset of the parent's
                assert np.isin(child.rows, node.rows).all()
            children.append(child)
        return children

    def column(self, node: PatternNode) -> SupportColumn:
        return SupportColumn(node.pattern(self.kind), node.rows)

    def walk(self, ceiling: int | None = DEFAULT_CEILING):
        """Depth-first iteration over every nonempty pattern node."""
        stack = [self.root()]
        count = 0
        while stack:
            node = stack.pop()
            children = self.expand(node)
            for child in reversed(children):
                stack.append(child)
            if node.depth:
                count += 1
                if ceiling is not None and count > ceiling:
                    raise EnumerationLimitError(
                        f"more than {ceiling} patterns; raise the ceiling or lower max length"
                    )
                yield node


def enumerate_all(dataset: Dataset, max_len: int, ceiling: int | None = DEFAULT_CEILING):
    """Every distinct pattern with nonempty support, as ``SupportColumn`` objects."""
    tree = PatternTree(dataset, max_len)
    return [tree.column(node) for node in tree.walk(ceiling)]
