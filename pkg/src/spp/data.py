"""Domain types and dataset ingestion.

Instances are either itemsets (strictly increasing item ids) or sequences
(ordered token ids).  Patterns are sub-itemsets or gapped subsequences; a
pattern's feature column is the 0/1 indicator of the instances containing it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ITEMSET = "itemset"
SEQUENCE = "sequence"
REGRESSION = "regression"
CLASSIFICATION = "classification"

STRUCTURE_KINDS = (ITEMSET, SEQUENCE)
TASK_KINDS = (REGRESSION, CLASSIFICATION)


class DatasetError(ValueError):
    """Raised for malformed input files or inconsistent datasets."""


@dataclass(frozen=True, order=True)
class Pattern:
    """A sub-structure used as a binary feature.

    ``kind`` is ``"itemset"`` or ``"sequence"``; ``items`` holds the ids in
    canonical order (sorted for itemsets, as mined for subsequences).
    """

    kind: str
    items: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in STRUCTURE_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if len(self.items) == 0:
            raise ValueError("the empty pattern is not a feature")
        if self.kind == ITEMSET and any(a >= b for a, b in zip(self.items, self.items[1:])):
            raise ValueError(f"itemset pattern not strictly increasing: {self.items}")

    def __len__(self):
        return len(self.items)

    def __str__(self):
        return format_pattern(self)

    def occurs_in(self, structure: Sequence[int]) -> bool:
        """Naive occurrence test (subset for itemsets, gapped subsequence otherwise)."""
        if self.kind == ITEMSET:
            return set(self.items).issubset(structure)
        it = iter(structure)
        return all(any(tok == want for tok in it) for want in self.items)

    def is_tree_prefix_of(self, other: "Pattern") -> bool:
        """True when ``other`` lies in the enumeration subtree rooted at ``self``."""
        return (
            self.kind == other.kind
            and len(other.items) >= len(self.items)
            and other.items[: len(self.items)] == self.items
        )


def format_pattern(pattern: Pattern) -> str:
    if pattern.kind == ITEMSET:
        return "{" + ",".join(str(i) for i in pattern.items) + "}"
    return "->".join(str(i) for i in pattern.items)


def parse_pattern(text: str) -> Pattern:
    text = text.strip()
    if text.startswith("{") and text.endswith("}"):
        return Pattern(ITEMSET, tuple(int(t) for t in text[1:-1].split(",")))
    return Pattern(SEQUENCE, tuple(int(t) for t in text.split("->")))


@dataclass(frozen=True)
class SupportColumn:
    """Pattern plus the sorted indices of the instances that contain it."""

    pattern: Pattern
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return int(self.rows.shape[0])

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[self.rows] = 1.0
        return x


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of labelled structured instances.

    The flat ``indptr``/``items`` arrays (CSR layout, one row per instance)
    feed the compiled projection kernel.
    """

    structures: tuple[tuple[int, ...], ...]
    labels: np.ndarray
    structure: str
    task: str
    alphabet_size: int
    indptr: np.ndarray = field(init=False, repr=False, compare=False)
    items: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.float64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        structures = tuple(tuple(int(t) for t in s) for s in self.structures)
        object.__setattr__(self, "structures", structures)
        validate_dataset(self)
        lengths = np.array([len(s) for s in structures], dtype=np.int64)
        indptr = np.zeros(len(structures) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        items = np.fromiter(
            (t for s in structures for t in s), dtype=np.int64, count=int(indptr[-1])
        )
        indptr.setflags(write=False)
        items.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "items", items)

    @property
    def n(self) -> int:
        return len(self.structures)

    def subset(self, rows: Iterable[int]) -> "Dataset":
        rows = list(rows)
        return Dataset(
            structures=tuple(self.structures[i] for i in rows),
            labels=self.labels[rows],
            structure=self.structure,
            task=self.task,
            alphabet_size=self.alphabet_size,
        )

    def support_of(self, pattern: Pattern) -> SupportColumn:
        """Support column by per-instance naive matching."""
        rows = [i for i, s in enumerate(self.structures) if pattern.occurs_in(s)]
        return SupportColumn(pattern, np.array(rows, dtype=np.int64))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.structures == other.structures
            and np.array_equal(self.labels, other.labels)
            and self.structure == other.structure
            and self.task == other.task
            and self.alphabet_size == other.alphabet_size
        )

    __hash__ = None


def validate_dataset(ds: Dataset) -> None:
    if ds.structure not in STRUCTURE_KINDS:
        raise DatasetError(f"unknown structure kind {ds.structure!r}")
    if ds.task not in TASK_KINDS:
        raise DatasetError(f"unknown task kind {ds.task!r}")
    if len(ds.structures) < 2:
        raise DatasetError("a dataset needs at least 2 instances")
    if ds.labels.shape != (len(ds.structures),):
        raise DatasetError("one label per instance required")
    if not np.all(np.isfinite(ds.labels)):
        raise DatasetError("labels must be finite")
    if ds.task == CLASSIFICATION and not np.all(np.abs(ds.labels) == 1.0):
        raise DatasetError("label not in {-1,+1}")
    for i, s in enumerate(ds.structures):
        if any(t < 0 or t >= ds.alphabet_size for t in s):
            raise DatasetError(f"instance {i}: id outside alphabet of size {ds.alphabet_size}")
        if ds.structure == ITEMSET and any(a >= b for a, b in zip(s, s[1:])):
            raise DatasetError(f"instance {i}: itemset ids must be strictly increasing")


@dataclass
class ReferenceSolution:
    """Primal-dual feasible triple with cached objective values.

    ``beta`` maps patterns to nonzero coefficients; ``supports`` keeps the
    support rows used for each, so the reference can be re-evaluated on
    another dataset of the same instances without re-mining.
    """

    beta: dict
    beta0: float
    alpha: np.ndarray
    primal: float = math.nan
    dual: float = math.nan
    gap: float = math.nan
    lam: float = math.nan
    kappa: float = math.nan

    def nonzero(self) -> dict:
        return {p: b for p, b in self.beta.items() if b != 0.0}


def null_reference(n: int) -> ReferenceSolution:
    """The ``(0, 0, 0)`` starting reference."""
    return ReferenceSolution(beta={}, beta0=0.0, alpha=np.zeros(n))


@dataclass(frozen=True)
class Hyperparams:
    lam: float
    kappa: float = 0.0
    epsilon: float = 1e-4
    M: int = 1
    T: int = 5
    max_len: int = 3
    max_epochs: int = 100_000

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lambda must be positive and finite")
        if not self.kappa >= 0:
            raise ValueError("kappa must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.M < 0 or self.T < 0:
            raise ValueError("M and T must be >= 0")
        if self.max_len < 1:
            raise ValueError("max pattern length must be >= 1")


def _parse_label(tok: str, task: str, lineno: int) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise DatasetError(f"line {lineno}: cannot parse label {tok!r}") from None
    if not math.isfinite(value):
        raise DatasetError(f"line {lineno}: label must be finite")
    if task == CLASSIFICATION and value not in (1.0, -1.0):
        raise DatasetError(f"line {lineno}: label not in {{-1,+1}}: {tok!r}")
    return value


def parse_dataset(text: str, structure: str, task: str, alphabet_size: int | None = None) -> Dataset:
    """Parse ``<label> <id> <id> ...`` lines; ``#`` lines are comments."""
    if structure not in STRUCTURE_KINDS:
        raise DatasetError(f"unknown structure kind {structure!r}")
    if task not in TASK_KINDS:
        raise DatasetError(f"unknown task kind {task!r}")
    structures, labels = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        labels.append(_parse_label(toks[0], task, lineno))
        ids = []
        for tok in toks[1:]:
            if not tok.isdigit():
                raise DatasetError(f"line {lineno}: bad id {tok!r}")
            ids.append(int(tok))
        if structure == ITEMSET:
            for a, b in zip(ids, ids[1:]):
                if a == b:
                    raise DatasetError(f"line {lineno}: duplicate item {a}")
                if a > b:
                    raise DatasetError(f"line {lineno}: itemset ids must be strictly increasing")
        structures.append(tuple(ids))
    if len(structures) < 2:
        raise DatasetError("a dataset needs at least 2 instances")
    seen = max((max(s) for s in structures if s), default=-1) + 1
    if alphabet_size is None:
        alphabet_size = seen
    elif alphabet_size < seen:
        raise DatasetError(f"alphabet size {alphabet_size} smaller than max id + 1 = {seen}")
    return Dataset(tuple(structures), np.array(labels), structure, task, max(alphabet_size, 1))


def load_dataset(path, structure: str, task: str) -> Dataset:
    return parse_dataset(Path(path).read_text(), structure, task)


def _format_label(value: float, task: str) -> str:
    if task == CLASSIFICATION:
        return "+1" if value > 0 else "-1"
    return repr(float(value))


def dump_dataset(ds: Dataset) -> str:
    lines = []
    for s, y in zip(ds.structures, ds.labels):
        lines.append(" ".join([_format_label(y, ds.task), *map(str, s)]))
    return "\n".join(lines) + "\n"
