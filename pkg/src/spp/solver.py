"""Coordinate descent on the active set with dynamic (multi-)screening.

A fit starts from one or two reference primal points.  Each is re-evaluated
on the current problem (intercept re-optimized, dual point recomputed), the
pruned tree traversal builds the candidate active set, and then every
reference is improved by coordinate sweeps in lock-step.  While two are
alive their balls are intersected for screening; after ``M`` epochs only the
one with the smallest duality gap is kept.  The fit stops as soon as any
iterate certifies a gap below ``epsilon``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .data import Dataset, Hyperparams, Pattern, ReferenceSolution
from .objective import dual_upper_bound, evaluate, margins, primal_from_margins
from .screening import Screener, TraversalStats, spp_traverse

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-13
# epochs between sign-fixed Newton steps
POLISH_EVERY = 5


class ConvergenceError(RuntimeError):
    """Epoch cap reached; ``best`` holds the lowest-gap iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


def screening_due(epoch: int, T: int) -> bool:
    """Every other epoch for the first ``T`` screenings, then every 10th."""
    if epoch <= 2 * T:
        return epoch % 2 == 0
    return epoch % 10 == 0


@dataclass
class FitStats:
    traversal: TraversalStats = field(default_factory=TraversalStats)
    epochs: int = 0
    coordinate_updates: int = 0
    dynamic_removed: int = 0
    n_refs: int = 1
    active_initial: int = 0
    active_final: int = 0
    wall_time: float = 0.0


@dataclass
class FitResult:
    solution: ReferenceSolution
    supports: dict
    stats: FitStats


class SolveState:
    """One primal iterate over the shared active columns."""

    def __init__(self, loss, y, cols, beta, beta0):
        self.loss = loss
        self.y = y
        self.beta = np.array(beta, dtype=float)
        self.beta0 = float(beta0)
        self.z = margins(len(y), cols, self.beta, self.beta0)
        self.dual = None
        self.primal = math.inf
        self.gap = math.inf

    @property
    def squared(self) -> bool:
        return self.loss.kind == "squared"

    def sweep(self, col_ptr, col_rows, lam, kappa):
        if self.squared:
            res = self.y - self.z
            kernels.cd_sweep_squared(col_ptr, col_rows, self.beta, res, lam, kappa)
            self.z = self.y - res
        else:
            kernels.cd_sweep_logistic(col_ptr, col_rows, self.beta, self.z, self.y, lam, kappa)

    def drop(self, keep: np.ndarray, cols) -> None:
        for j in np.flatnonzero(~keep):
            if self.beta[j] != 0.0:
                self.z[cols[j]] -= self.beta[j]
        self.beta = self.beta[keep]

    def as_reference(self) -> ReferenceSolution:
        return ReferenceSolution(
            beta={}, beta0=self.beta0, alpha=self.dual.alpha, primal=self.primal, dual=self.dual.dual, gap=self.gap
        )


def intercept_update(state: SolveState, steps: int = 1) -> None:
    """Optimize the unpenalized intercept.

    Squared loss: exact (mean residual).  Logistic: guarded Newton steps with
    step halving so the loss never increases.
    """
    y, z = state.y, state.z
    if state.squared:
        shift = float(np.mean(y - z))
        state.z = z + shift
        state.beta0 += shift
        return
    for _ in range(steps):
        p = expit(-y * z)
        g = -float(np.sum(y * p))
        if abs(g) <= NEWTON_TOL * len(y):
            return
        h = float(np.sum(p * (1.0 - p)))
        step = -g / max(h, 1e-300)
        base = state.loss.value(z, y)
        for _ in range(60):
            trial = z + step
            if state.loss.value(trial, y) <= base:
                break
            step *= 0.5
        else:
            return
        z = trial
        state.z = z
        state.beta0 += step


def newton_polish(state: SolveState, cols, lam: float, kappa: float, rounds: int = 10) -> bool:
    """Safeguarded Newton steps on ``(beta0, beta_S)`` with the signs of ``beta_S`` fixed.

    ``S`` is the current nonzero set.  On the sign-preserving segment the
    objective is smooth, so a Newton direction (least-squares solve, which
    tolerates duplicated columns) with backtracking converges quickly once the
    support is identified.  A step stops at the first sign change, where that
    coefficient becomes exactly zero; the next round then re-solves on the
    smaller support.  Returns True when the objective decreased.
    """
    improved = False
    for _ in range(rounds):
        status = _newton_step(state, cols, lam, kappa)
        improved |= status > 0
        if status != 2:
            break
    return improved


def _newton_step(state: SolveState, cols, lam: float, kappa: float) -> int:
    """0: no decrease, 1: full or backtracked step, 2: step stopped at a sign change."""
    S = np.flatnonzero(state.beta)
    if len(S) == 0 and not state.squared:
        return 0
    y, z, n = state.y, state.z, len(state.y)
    A = np.zeros((n, len(S) + 1))
    A[:, 0] = 1.0
    for k, j in enumerate(S):
        A[cols[j], k + 1] = 1.0
    b = state.beta[S]
    sgn = np.sign(b)
    if state.squared:
        dz = z - y
        w = np.ones(n)
    else:
        p = expit(-y * z)
        dz = -y * p
        w = p * (1.0 - p)
    g = A.T @ dz
    g[1:] += lam * (sgn + kappa * b)
    H = A.T @ (w[:, None] * A)
    H[np.arange(1, len(S) + 1), np.arange(1, len(S) + 1)] += lam * kappa
    d = -np.linalg.lstsq(H, g, rcond=None)[0]
    slope = float(g @ d)
    if not slope < 0.0:
        return 0
    db = d[1:]
    cross = np.where(db * sgn < 0.0, -b / np.where(db == 0.0, 1.0, db), np.inf)
    t_cross = float(cross.min(initial=np.inf))
    t = min(1.0, t_cross)
    base = primal_from_margins(state.loss, z, y, state.beta, lam, kappa)
    for _ in range(40):
        nb = b + t * db
        if t == t_cross:
            nb[np.argmin(cross)] = 0.0
        nb[nb * sgn < 0.0] = 0.0
        beta = state.beta.copy()
        beta[S] = nb
        nz = z + t * (A @ d)
        try:
            val = primal_from_margins(state.loss, nz, y, beta, lam, kappa)
        except FloatingPointError:
            val = math.inf
        if val <= base + 1e-4 * t * slope:
            if not val < base:
                return 0
            state.beta, state.beta0, state.z = beta, state.beta0 + t * d[0], nz
            return 2 if t == t_cross else 1
        t *= 0.5
    return 0


def coordinate_update(state: SolveState, rows, j: int, lam: float, kappa: float) -> None:
    """Single-coordinate version of the sweep kernels (used by tests and diagnostics)."""
    col_ptr = np.array([0, len(rows)], dtype=np.int64)
    col_rows = np.ascontiguousarray(rows, dtype=np.int64)
    sub = state.beta[j : j + 1].copy()
    if state.squared:
        res = state.y - state.z
        kernels.cd_sweep_squared(col_ptr, col_rows, sub, res, lam, kappa)
        state.z = state.y - res
    else:
        kernels.cd_sweep_logistic(col_ptr, col_rows, sub, state.z, state.y, lam, kappa)
    state.beta[j] = sub[0]


def _csc(cols):
    col_ptr = np.zeros(len(cols) + 1, dtype=np.int64)
    np.cumsum([len(c) for c in cols], out=col_ptr[1:])
    col_rows = np.concatenate(cols).astype(np.int64) if cols else np.zeros(0, dtype=np.int64)
    return col_ptr, col_rows


class _Problem:
    def __init__(self, dataset, loss, lam, kappa, hp):
        self.dataset = dataset
        self.loss = loss
        self.lam = lam
        self.kappa = kappa
        self.hp = hp
        self.y = dataset.labels

    def gap_above(self, state: SolveState, cols) -> bool:
        """True when a cheap active-set bound already proves ``gap >= epsilon``."""
        p = primal_from_margins(self.loss, state.z, self.y, state.beta, self.lam, self.kappa)
        bound = dual_upper_bound(self.loss, state.z, self.y, cols, self.lam, self.kappa)
        if state.dual is not None:
            bound = max(bound, state.dual.dual)
        return p - bound >= self.hp.epsilon * (1.0 + 1e-9)

    def refresh(self, state: SolveState, cols) -> None:
        """Primal value and gap; the dual point is the best one seen so far.

        Every dual point computed for this problem stays feasible, so keeping
        the best one makes the gap non-increasing across epochs.
        """
        state.primal, dp = evaluate(
            self.dataset, self.loss, cols, state.beta, state.beta0, self.lam, self.kappa, self.hp.max_len, z=state.z
        )
        if state.dual is None or dp.dual > state.dual.dual:
            state.dual = dp
        state.gap = state.primal - state.dual.dual


def _ref_columns(dataset: Dataset, ref: ReferenceSolution, supports: dict):
    """Patterns and support rows of a reference's nonzero coefficients on ``dataset``."""
    patterns, cols, beta = [], [], []
    for p, b in ref.beta.items():
        if b == 0.0:
            continue
        rows = supports.get(p)
        if rows is None:
            rows = dataset.support_of(p).rows
            supports[p] = rows
        if len(rows) == 0:
            continue
        patterns.append(p)
        cols.append(rows)
        beta.append(b)
    return patterns, cols, np.array(beta, dtype=float)


def _solution(state: SolveState, patterns, lam, kappa) -> ReferenceSolution:
    beta = {p: float(b) for p, b in zip(patterns, state.beta) if b != 0.0}
    return ReferenceSolution(
        beta=beta,
        beta0=state.beta0,
        alpha=state.dual.alpha,
        primal=state.primal,
        dual=state.dual.dual,
        gap=state.gap,
        lam=lam,
        kappa=kappa,
    )


def fit(dataset: Dataset, loss, refs, hp: Hyperparams, supports=None, trace=None, on_epoch=None, check=False):
    """Solve one ``(lambda, kappa)`` cell starting from one or two references.

    ``refs`` are :class:`ReferenceSolution` objects; only their primal parts
    are used, the dual side is recomputed for this dataset and
    hyper-parameters.  ``supports`` is an optional ``Pattern -> rows`` cache
    valid for ``dataset``.  ``trace(event, items)`` receives every static and
    dynamic removal.  Returns a :class:`FitResult`.
    """
    t0 = time.perf_counter()
    lam, kappa = hp.lam, hp.kappa
    problem = _Problem(dataset, loss, lam, kappa, hp)
    supports = {} if supports is None else dict(supports)
    stats = FitStats(n_refs=len(refs))
    if not 1 <= len(refs) <= 2:
        raise ValueError("fit takes one or two references")

    states = []
    for ref in refs:
        patterns, cols, beta = _ref_columns(dataset, ref, supports)
        st = SolveState(loss, dataset.labels, cols, beta, ref.beta0)
        intercept_update(st, steps=100)
        problem.refresh(st, cols)
        states.append((st, patterns, cols))

    best = min(states, key=lambda s: s[0].gap)
    if best[0].gap < hp.epsilon:
        stats.wall_time = time.perf_counter() - t0
        return FitResult(_solution(best[0], best[1], lam, kappa), _keep(supports, best[1]), stats)

    live = [s[0].as_reference() for s in states]
    active, tstats = spp_traverse(dataset, lam, live, loss.gamma, hp.max_len, trace=trace, check=check)
    stats.traversal = tstats
    patterns = [Pattern(dataset.structure, node.items) for node in active]
    cols = [node.rows for node in active]
    for p, rows in zip(patterns, cols):
        supports[p] = rows
    stats.active_initial = len(patterns)

    index = {p: j for j, p in enumerate(patterns)}
    iterates = []
    for st, ref_patterns, _ in states:
        beta = np.zeros(len(patterns))
        for p, b in zip(ref_patterns, st.beta):
            j = index.get(p)
            if j is not None:
                beta[j] = b
        it = SolveState(loss, dataset.labels, cols, beta, st.beta0)
        it.dual = st.dual
        iterates.append(it)
    if hp.M == 0 and len(iterates) > 1:
        keep = min(range(len(states)), key=lambda i: states[i][0].gap)
        iterates = [iterates[keep]]

    col_ptr, col_rows = _csc(cols)
    best_state = None
    for epoch in range(1, hp.max_epochs + 1):
        due = screening_due(epoch, hp.T) and bool(cols)
        # exact gaps are needed to screen, to pick between iterates, and to stop
        need_gaps = due or check or on_epoch is not None or (len(iterates) > 1 and epoch >= hp.M)
        for st in iterates:
            before = primal_from_margins(loss, st.z, st.y, st.beta, lam, kappa) if check else None
            st.sweep(col_ptr, col_rows, lam, kappa)
            intercept_update(st)
            if epoch % POLISH_EVERY == 0:
                newton_polish(st, cols, lam, kappa)
            if check:
                after = primal_from_margins(loss, st.z, st.y, st.beta, lam, kappa)
                assert after <= before + 1e-10 * max(1.0, abs(before)), "objective increased"
            if need_gaps or not problem.gap_above(st, cols):
                problem.refresh(st, cols)
            else:
                st.gap = math.inf
        stats.epochs = epoch
        stats.coordinate_updates += len(cols) * len(iterates)
        if epoch == hp.max_epochs:
            for st in iterates:
                if not math.isfinite(st.gap):
                    problem.refresh(st, cols)
        best_state = min(iterates, key=lambda s: s.gap)
        if on_epoch is not None:
            on_epoch(epoch, best_state.primal, best_state.dual.dual, best_state.gap, len(cols))
        if best_state.gap < hp.epsilon:
            break
        if due:
            screener = Screener([st.as_reference() for st in iterates], loss.gamma)
            keep = np.array([screener.screen(rows) >= lam for rows in cols], dtype=bool)
            if not keep.all():
                for j in np.flatnonzero(~keep):
                    if trace is not None:
                        trace("dynamic", patterns[j].items)
                for st in iterates:
                    st.drop(keep, cols)
                stats.dynamic_removed += int((~keep).sum())
                patterns = [p for p, k in zip(patterns, keep) if k]
                cols = [c for c, k in zip(cols, keep) if k]
                col_ptr, col_rows = _csc(cols)
        if epoch >= hp.M and len(iterates) > 1:
            iterates = [best_state]
    else:
        raise ConvergenceError(
            f"no convergence within {hp.max_epochs} epochs (gap {best_state.gap:g})",
            _solution(best_state, patterns, lam, kappa),
        )

    stats.active_final = len(cols)
    stats.wall_time = time.perf_counter() - t0
    sol = _solution(best_state, patterns, lam, kappa)
    return FitResult(sol, _keep(supports, list(sol.beta)), stats)


def _keep(supports, patterns):
    return {p: supports[p] for p in patterns if p in supports}
