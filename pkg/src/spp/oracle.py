"""Brute-force ground truth for tests: dense designs and unscreened solvers.

Nothing here calls into the enumeration tree, the screening code or the
production solver.  Patterns come from generate-and-test over each instance,
columns from a direct matcher, and the fit is plain cyclic coordinate descent
with exact one-dimensional minimization over every column.  Only the loss
value and conjugate functions are shared with the library.

``numba`` and ``cvxpy`` are needed here and nowhere else; they are imported
lazily so the library itself does not depend on them.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .objective import LogisticLoss, SquaredLoss

GUARD = 10**6


class OracleError(RuntimeError):
    pass


def _contains(kind: str, pattern: tuple, structure: tuple) -> bool:
    if kind == "itemset":
        return all(p in structure for p in pattern)
    k = 0
    for tok in structure:
        if k < len(pattern) and tok == pattern[k]:
            k += 1
    return k == len(pattern)


def naive_patterns(structures, kind: str, max_len: int, guard: int = GUARD):
    """Every nonempty sub-pattern of some instance, sorted by (length, ids)."""
    found = set()
    for s in structures:
        for L in range(1, min(max_len, len(s)) + 1):
            for idx in itertools.combinations(range(len(s)), L):
                found.add(tuple(s[i] for i in idx))
                if len(found) > guard:
                    raise OracleError(f"more than {guard} patterns")
    return sorted(found, key=lambda p: (len(p), p))


@dataclass
class DenseProblem:
    X: np.ndarray
    y: np.ndarray
    lam: float
    kappa: float
    loss: str
    patterns: list
    kind: str

    @property
    def shape(self):
        return self.X.shape


def dense_design(structures, kind: str, max_len: int, guard: int = GUARD):
    """``(patterns, X)`` with ``X[i, j] = 1`` iff pattern ``j`` occurs in instance ``i``."""
    pats = naive_patterns(structures, kind, max_len, guard)
    X = np.zeros((len(structures), len(pats)), order="F")
    for j, p in enumerate(pats):
        for i, s in enumerate(structures):
            if _contains(kind, p, s):
                X[i, j] = 1.0
    return pats, X


def dense_problem(dataset, lam: float, kappa: float, max_len: int, loss: str | None = None, guard: int = GUARD):
    if loss is None:
        loss = "logistic" if dataset.task == "classification" else "squared"
    pats, X = dense_design(dataset.structures, dataset.structure, max_len, guard)
    return DenseProblem(X, np.array(dataset.labels, dtype=float), float(lam), float(kappa), loss, pats, dataset.structure)


def _loss_obj(kind):
    return SquaredLoss() if kind == "squared" else LogisticLoss()


def _neg_grad(kind, z, y):
    if kind == "squared":
        return y - z
    return y / (1.0 + np.exp(y * z))


def dense_null_lambda_max(problem: DenseProblem) -> float:
    y = problem.y
    if problem.loss == "squared":
        b0 = y.mean()
    else:
        pos = np.sum(y > 0)
        b0 = math.log(pos / (len(y) - pos))
    c = _neg_grad(problem.loss, np.full(len(y), b0), y)
    c = c - c.mean()
    return float(np.abs(problem.X.T @ c).max(initial=0.0))


def dense_objectives(problem: DenseProblem, beta, beta0):
    """``(P, D, alpha)`` computed from scratch on the dense design."""
    X, y, lam, kappa = problem.X, problem.y, problem.lam, problem.kappa
    loss = _loss_obj(problem.loss)
    z = X @ beta + beta0
    P = loss.value(z, y) + lam * (np.abs(beta).sum() + 0.5 * kappa * beta @ beta)
    c = _neg_grad(problem.loss, z, y)
    c = c - c.mean()
    inner = np.abs(X.T @ c)
    m = float(inner.max(initial=0.0))
    s = 1.0 if m <= lam else lam / m
    alpha, D = s * c, loss.neg_conj(s * c, y)
    if kappa > 0.0:
        Du = loss.neg_conj(c, y) - float(np.sum(np.maximum(inner - lam, 0.0) ** 2)) / (2.0 * lam * kappa)
        if Du > D:
            alpha, D = c, Du
    return float(P), float(D), alpha


_KERNELS = {}


def _kernels():
    if _KERNELS:
        return _KERNELS
    import numba

    @numba.njit(cache=True)
    def dlogit(x, y, z, b, db):
        # derivative and curvature of sum softplus(y (z + db x)) w.r.t. db
        g = 0.0
        h = 0.0
        for i in range(x.shape[0]):
            if x[i] != 0.0:
                t = y[i] * (z[i] + db * x[i])
                p = 1.0 / (1.0 + math.exp(t))
                g -= y[i] * x[i] * p
                h += x[i] * x[i] * p * (1.0 - p)
        return g, h

    @numba.njit(cache=True)
    def solve_1d(x, y, z, b, lam, kappa, pen):
        # exact minimizer over b' of loss(z + (b'-b) x) + pen*lam*(|b'| + kappa/2 b'^2)
        g0, _ = dlogit(x, y, z, b, -b)
        if pen and abs(g0) <= lam:
            return 0.0
        # root of f(b') = g(b'-b) + pen*lam*(sign + kappa b'); f is increasing
        sgn = 0.0
        if pen:
            sgn = -1.0 if g0 > lam else 1.0
        lo, hi = -1.0, 1.0
        if pen:
            if sgn > 0:
                lo, hi = 0.0, 1.0
            else:
                lo, hi = -1.0, 0.0

        def f(bb):
            g, _ = dlogit(x, y, z, b, bb - b)
            return g + pen * lam * (sgn + kappa * bb)

        it = 0
        while f(hi) < 0.0 and it < 200:
            hi = hi * 2.0 if hi > 0 else 1.0
            it += 1
        it = 0
        while f(lo) > 0.0 and it < 200:
            lo = lo * 2.0 if lo < 0 else -1.0
            it += 1
        bb = 0.5 * (lo + hi)
        for _ in range(200):
            fv = f(bb)
            if fv > 0:
                hi = bb
            else:
                lo = bb
            g, h = dlogit(x, y, z, b, bb - b)
            h += pen * lam * kappa
            nb = bb - fv / h if h > 0 else 0.5 * (lo + hi)
            if not (lo < nb < hi):
                nb = 0.5 * (lo + hi)
            if abs(nb - bb) <= 1e-15 * max(1.0, abs(bb)):
                bb = nb
                break
            bb = nb
        return bb

    @numba.njit(cache=True)
    def epoch_squared(X, y, beta, beta0, z, lam, kappa):
        n, d = X.shape
        for j in range(d):
            a = 0.0
            g = 0.0
            for i in range(n):
                if X[i, j] != 0.0:
                    a += 1.0
                    g += y[i] - z[i]
            if a == 0.0:
                continue
            v = a * beta[j] + g
            nb = 0.0
            if v > lam:
                nb = (v - lam) / (a + lam * kappa)
            elif v < -lam:
                nb = (v + lam) / (a + lam * kappa)
            dlt = nb - beta[j]
            if dlt != 0.0:
                beta[j] = nb
                for i in range(n):
                    if X[i, j] != 0.0:
                        z[i] += dlt
        shift = 0.0
        for i in range(n):
            shift += y[i] - z[i]
        shift /= n
        for i in range(n):
            z[i] += shift
        return beta0 + shift

    @numba.njit(cache=True)
    def epoch_logistic(X, y, beta, beta0, z, lam, kappa):
        n, d = X.shape
        for j in range(d):
            x = X[:, j]
            nb = solve_1d(x, y, z, beta[j], lam, kappa, 1.0)
            dlt = nb - beta[j]
            if dlt != 0.0:
                beta[j] = nb
                for i in range(n):
                    z[i] += dlt * x[i]
        ones = np.ones(n)
        nb0 = solve_1d(ones, y, z, beta0, 0.0, 0.0, 0.0)
        dlt = nb0 - beta0
        for i in range(n):
            z[i] += dlt
        return nb0

    _KERNELS.update(squared=epoch_squared, logistic=epoch_logistic)
    return _KERNELS


def _dense_newton(problem: DenseProblem, beta, beta0):
    """Newton step on the intercept and nonzero coefficients with their signs held.

    Accepted only if the objective decreases; returns the new ``(beta, beta0)``.
    """
    X, y, lam, kappa = problem.X, problem.y, problem.lam, problem.kappa
    loss = _loss_obj(problem.loss)

    def objective(b, b0):
        z = X @ b + b0
        return loss.value(z, y) + lam * (np.abs(b).sum() + 0.5 * kappa * b @ b)

    S = np.flatnonzero(beta)
    A = np.column_stack([np.ones(len(y)), X[:, S]])
    z = X @ beta + beta0
    if problem.loss == "squared":
        r, w = z - y, np.ones(len(y))
    else:
        q = 1.0 / (1.0 + np.exp(y * z))
        r, w = -y * q, q * (1.0 - q)
    s = np.sign(beta[S])
    grad = A.T @ r + np.concatenate([[0.0], lam * (s + kappa * beta[S])])
    hess = A.T @ (A * w[:, None]) + np.diag(np.concatenate([[0.0], np.full(len(S), lam * kappa)]))
    step = np.linalg.pinv(hess) @ grad
    f0 = objective(beta, beta0)
    t = 1.0
    while t > 1e-12:
        nb = beta.copy()
        cand = beta[S] - t * step[1:]
        cand[np.sign(cand) != s] = 0.0
        nb[S] = cand
        nb0 = beta0 - t * step[0]
        if objective(nb, nb0) < f0:
            return nb, nb0
        t *= 0.5
    return beta, beta0


@dataclass
class DenseFit:
    beta: np.ndarray
    beta0: float
    alpha: np.ndarray
    gap: float
    primal: float
    dual: float
    epochs: int


def dense_fit(problem: DenseProblem, epsilon: float = 1e-8, max_epochs: int = 2_000_000, check_every: int = 10) -> DenseFit:
    """Cyclic coordinate descent over every column until the gap is ``<= epsilon``.

    Every ``check_every`` epochs a sign-preserving Newton step is tried on the
    current support (plain coordinate descent stalls on nearly separable
    logistic problems) and the gap is recomputed from scratch.
    """
    d = problem.X.shape[1]
    if d > GUARD:
        raise OracleError(f"{d} columns exceed the oracle guard")
    X = np.asfortranarray(problem.X, dtype=float)
    y = problem.y
    epoch_fn = _kernels()[problem.loss]
    beta = np.zeros(d)
    if problem.loss == "squared":
        beta0 = float(y.mean())
    else:
        pos = np.sum(y > 0)
        beta0 = math.log(pos / (len(y) - pos))
    z = X @ beta + beta0
    for epoch in range(1, max_epochs + 1):
        beta0 = epoch_fn(X, y, beta, beta0, z, problem.lam, problem.kappa)
        if epoch % check_every and epoch > 5:
            continue
        beta, beta0 = _dense_newton(problem, beta, beta0)
        z = X @ beta + beta0
        P, D, alpha = dense_objectives(problem, beta, beta0)
        if P - D <= epsilon:
            return DenseFit(beta, beta0, alpha, P - D, P, D, epoch)
    raise OracleError(f"dense fit did not reach gap {epsilon} in {max_epochs} epochs (gap {P - D:g})")


# two-ball constrained maximization --------------------------------------

def constrained_max_oracle(column, balls, n: int | None = None, method: str = "socp", restarts: int = 100, seed: int = 0):
    """``max x^T alpha`` over the intersection of ``balls`` and ``sum(alpha) = 0``.

    ``column`` is a dense 0/1 vector (or anything with ``rows`` and ``count``
    given ``n``); ``balls`` is a list of ``(center, radius)``.  ``method="socp"``
    solves the convex program with an interior-point solver;
    ``method="ascent"`` runs projected gradient ascent (Dykstra projections)
    from ``restarts`` random starts.
    """
    x = _as_dense(column, n)
    balls = [(np.asarray(c, dtype=float), float(r)) for c, r in balls]
    if method == "socp":
        return _socp_max(x, balls)
    if method == "ascent":
        return _ascent_max(x, balls, restarts, seed)
    raise ValueError(f"unknown method {method!r}")


def _as_dense(column, n):
    if hasattr(column, "rows"):
        x = np.zeros(n)
        x[np.asarray(column.rows)] = 1.0
        return x
    return np.asarray(column, dtype=float)


def _socp_max(x, balls):
    import cvxpy as cp

    a = cp.Variable(x.shape[0])
    cons = [cp.sum(a) == 0]
    cons += [cp.norm(a - c, 2) <= r for c, r in balls]
    prob = cp.Problem(cp.Maximize(x @ a), cons)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise OracleError(f"constrained maximization infeasible ({prob.status})")
    return float(prob.value)


def _project(v, balls, iters=2000):
    """Dykstra projection onto the intersection of the balls and the hyperplane."""
    sets = len(balls) + 1
    incs = [np.zeros_like(v) for _ in range(sets)]
    p = v.copy()
    for _ in range(iters):
        prev = p.copy()
        for k in range(sets):
            w = p + incs[k]
            if k == 0:
                q = w - w.mean()
            else:
                c, r = balls[k - 1]
                d = w - c
                nd = np.linalg.norm(d)
                q = w if nd <= r else c + d * (r / nd)
            incs[k] = w - q
            p = q
        if np.linalg.norm(p - prev) < 1e-14:
            break
    return p


def _ascent_max(x, balls, restarts, seed):
    rng = np.random.default_rng(seed)
    c0, r0 = balls[0]
    best = -math.inf
    for _ in range(restarts):
        a = _project(c0 + r0 * rng.normal(size=x.shape[0]) / math.sqrt(x.shape[0]), balls)
        step = r0 if r0 > 0 else 1.0
        for _ in range(400):
            nxt = _project(a + step * x, balls)
            if x @ nxt <= x @ a + 1e-15:
                step *= 0.5
                if step < 1e-12:
                    break
            else:
                a = nxt
        best = max(best, float(x @ a))
    return best
