"""Regularization paths over (lambda, kappa) and cross-validation pathing.

Cells of the 2-D grid are visited lambda-major: ``(l1,k1), (l1,k2), ...,
(l2,k1), ...``.  A cell is warm-started from the solved neighbours at the
previous lambda (same kappa) and the previous kappa (same lambda), giving one
or two references.  In cross-validation the full-data fold is solved first;
every other fold at ``lambda_k`` then uses the full-data solution at
``lambda_k`` and its own solution at ``lambda_{k-1}``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, Dataset, Hyperparams, ReferenceSolution, null_reference
from .objective import centered_neg_grad
from .screening import find_max_abs_inner
from .solver import FitResult, fit

logger = logging.getLogger(__name__)


def null_alpha(dataset: Dataset, loss) -> np.ndarray:
    y = dataset.labels
    z = np.full(dataset.n, loss.null_intercept(y))
    return centered_neg_grad(loss, z, y)


def lambda_max(dataset: Dataset, loss, max_len: int) -> float:
    """Smallest lambda whose optimum has every coefficient at zero."""
    alpha = null_alpha(dataset, loss)
    if not np.any(alpha):
        logger.warning("null-model gradient is zero; lambda_max = 0")
        return 0.0
    value, _ = find_max_abs_inner(dataset, alpha, max_len)
    return value


@dataclass(frozen=True)
class PathGrid:
    lambdas: tuple
    kappas: tuple

    def __post_init__(self):
        lam = np.asarray(self.lambdas)
        kap = np.asarray(self.kappas)
        if len(lam) < 1 or len(kap) < 1:
            raise ValueError("empty grid")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("lambda sequence must be strictly decreasing")
        if np.any(np.diff(kap) <= 0):
            raise ValueError("kappa sequence must be strictly increasing")
        if kap[0] != 0.0:
            raise ValueError("kappa sequence must start at 0")

    def cells(self):
        for k in range(len(self.lambdas)):
            for kk in range(len(self.kappas)):
                yield k, kk


def make_grid(lam_max: float, count: int, kappas=(0.0,), ratio: float = 0.01) -> PathGrid:
    """``count`` log-spaced lambdas from ``lam_max`` down to ``ratio * lam_max``."""
    if count < 2:
        raise ValueError("need at least 2 lambda values")
    if not lam_max > 0:
        raise ValueError("lambda_max must be positive")
    if not 0 < ratio < 1:
        raise ValueError("lambda ratio must lie in (0, 1)")
    lambdas = lam_max * np.logspace(0.0, math.log10(ratio), count)
    lambdas[0] = lam_max
    return PathGrid(tuple(float(x) for x in lambdas), tuple(float(k) for k in kappas))


@dataclass
class CellResult:
    lam: float
    kappa: float
    result: FitResult
    ref_cells: tuple
    order: int

    @property
    def solution(self) -> ReferenceSolution:
        return self.result.solution


def path_2d(dataset: Dataset, loss, grid: PathGrid, hp: Hyperparams, trace=None, max_refs: int = 2, check=False):
    """Solve every grid cell; returns ``{(k, k'): CellResult}`` in visit order.

    ``max_refs=1`` keeps only the previous-lambda reference (single-reference
    pathing) for comparison runs.
    """
    out = {}
    supports = {}
    for order, (k, kk) in enumerate(grid.cells()):
        lam, kappa = grid.lambdas[k], grid.kappas[kk]
        ref_cells = []
        if k > 0:
            ref_cells.append((k - 1, kk))
        if kk > 0 and len(ref_cells) < max_refs:
            ref_cells.append((k, kk - 1))
        refs = [out[c].solution for c in ref_cells] or [null_reference(dataset.n)]
        cell_hp = Hyperparams(lam, kappa, hp.epsilon, hp.M, hp.T, hp.max_len, hp.max_epochs)
        cell_trace = None if trace is None else (lambda ev, items, _c=(k, kk): trace(_c, ev, items))
        res = fit(dataset, loss, refs, cell_hp, supports=supports, trace=cell_trace, check=check)
        supports.update(res.supports)
        logger.info(
            "cell (%d,%d) lam=%.6g kappa=%g refs=%d gap=%.3g active=%d epochs=%d",
            k, kk, lam, kappa, len(ref_cells) or 1, res.solution.gap, len(res.solution.beta), res.stats.epochs,
        )
        out[(k, kk)] = CellResult(lam, kappa, res, tuple(ref_cells), order)
    return out


@dataclass(frozen=True)
class FoldPlan:
    """Index subsets; the first is always the full index set."""

    subsets: tuple

    def __post_init__(self):
        if not self.subsets:
            raise ValueError("empty fold plan")
        full = tuple(self.subsets[0])
        n = len(full)
        if full != tuple(range(n)):
            raise ValueError("first fold must be the full index set")
        for s in self.subsets[1:]:
            s = tuple(s)
            if len(s) >= n or len(set(s)) != len(s) or any(i < 0 or i >= n for i in s):
                raise ValueError("later folds must be proper subsets of the full index set")

    @property
    def n(self) -> int:
        return len(self.subsets[0])

    def held_out(self, k: int):
        keep = set(self.subsets[k])
        return [i for i in range(self.n) if i not in keep]

    @classmethod
    def loo(cls, n: int, count: int | None = None, seed: int = 0) -> "FoldPlan":
        drop = list(range(n))
        if count is not None and count < n:
            drop = sorted(np.random.default_rng(seed).choice(n, size=count, replace=False).tolist())
        subsets = [tuple(range(n))] + [tuple(i for i in range(n) if i != d) for d in drop]
        return cls(tuple(subsets))

    @classmethod
    def kfold(cls, n: int, k: int, seed: int = 0) -> "FoldPlan":
        if not 2 <= k <= n:
            raise ValueError("k-fold needs 2 <= k <= n")
        perm = np.random.default_rng(seed).permutation(n)
        parts = np.array_split(perm, k)
        subsets = [tuple(range(n))]
        for part in parts:
            held = set(part.tolist())
            subsets.append(tuple(i for i in range(n) if i not in held))
        return cls(tuple(subsets))


def predict(dataset: Dataset, solution: ReferenceSolution, rows) -> np.ndarray:
    """Margins ``beta0 + sum_j beta_j x_ij`` for instances ``rows`` by direct matching."""
    z = np.full(len(rows), solution.beta0)
    for p, b in solution.beta.items():
        for out, i in enumerate(rows):
            if p.occurs_in(dataset.structures[i]):
                z[out] += b
    return z


def validation_metric(dataset: Dataset, solution: ReferenceSolution, rows) -> float:
    """Mean squared error (regression) or 0-1 error (classification)."""
    if not rows:
        return math.nan
    z = predict(dataset, solution, rows)
    y = dataset.labels[list(rows)]
    if dataset.task == CLASSIFICATION:
        return float(np.mean(np.where(z >= 0, 1.0, -1.0) != y))
    return float(np.mean((y - z) ** 2))


@dataclass
class CVRecord:
    fold: int
    lam_index: int
    lam: float
    kappa: float
    metric: float
    cell: CellResult = field(repr=False)


def _solve_fold(dataset, loss, plan, k, lambdas, kappa, hp, full, trace, check):
    sub = dataset.subset(plan.subsets[k])
    held = plan.held_out(k)
    records = []
    supports = {}
    prev = None
    for kk, lam in enumerate(lambdas):
        ref_cells, refs = [], []
        if k > 0:
            ref_cells.append((0, kk))
            refs.append(full[kk].solution)
        if kk > 0:
            ref_cells.append((k, kk - 1))
            refs.append(prev.solution)
        if not refs:
            refs = [null_reference(sub.n)]
        cell_hp = Hyperparams(lam, kappa, hp.epsilon, hp.M, hp.T, hp.max_len, hp.max_epochs)
        cell_trace = None if trace is None else (lambda ev, items, _c=(k, kk): trace(_c, ev, items))
        res = fit(sub, loss, refs, cell_hp, supports=supports, trace=cell_trace, check=check)
        supports.update(res.supports)
        cell = CellResult(lam, kappa, res, tuple(ref_cells), kk)
        metric = validation_metric(dataset, res.solution, held)
        records.append(CVRecord(k, kk, lam, kappa, metric, cell))
        prev = cell
    return records


def cv_path(dataset: Dataset, loss, plan: FoldPlan, lambdas, kappa: float, hp: Hyperparams,
            threads: int = 1, trace=None, check=False):
    """Cross-validation path; returns records ordered by (fold, lambda index).

    Fold 0 (full data) is solved first for every lambda.  Remaining folds only
    depend on fold 0 and on themselves, so they run on up to ``threads``
    workers once fold 0 is complete.
    """
    if plan.n != dataset.n:
        raise ValueError("fold plan size does not match dataset")
    lambdas = [float(x) for x in lambdas]
    first = _solve_fold(dataset, loss, plan, 0, lambdas, kappa, hp, None, trace, check)
    full = [r.cell for r in first]
    rest = range(1, len(plan.subsets))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_solve_fold, dataset, loss, plan, k, lambdas, kappa, hp, full, trace, check)
                for k in rest
            ]
            others = [f.result() for f in futures]
    else:
        others = [_solve_fold(dataset, loss, plan, k, lambdas, kappa, hp, full, trace, check) for k in rest]
    return first + [r for fold in others for r in fold]


def select_hyperparams(records):
    """``(lambda, kappa)`` minimizing the fold-averaged validation metric.

    Only folds with held-out data count.  Ties go to the larger lambda, then
    to the smaller kappa.
    """
    sums = {}
    for r in records:
        if math.isnan(r.metric):
            continue
        key = (r.lam, r.kappa)
        total, cnt = sums.get(key, (0.0, 0))
        sums[key] = (total + r.metric, cnt + 1)
    if not sums:
        raise ValueError("no validation metrics to select from")
    means = {key: total / cnt for key, (total, cnt) in sums.items()}
    return min(means, key=lambda key: (means[key], -key[0], key[1]))
