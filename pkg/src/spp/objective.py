"""Losses, primal and dual objective values, dual scaling and duality gap.

The primal is ``L_y(X beta + 1 beta0) + lam * (||beta||_1 + kappa/2 ||beta||_2^2)``
with the loss left unnormalized.  The dual is
``D(alpha) = -L*(-alpha) - Omega*(X^T alpha)`` over ``sum(alpha) = 0``, where
``Omega*(v) = sum_j max(|v_j| - lam, 0)^2 / (2 lam kappa)`` (an indicator of
``|v_j| <= lam`` when ``kappa = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import expit, xlogy

from .data import CLASSIFICATION, Dataset, Pattern, ReferenceSolution
from . import screening

FEASIBILITY_SLACK = 1e-9


class UnscaledDualError(ValueError):
    """A dual vector was evaluated without a feasibility certificate."""


class SquaredLoss:
    """``0.5 * ||y - z||^2``."""

    kind = "squared"
    gamma = 1.0

    def value(self, z, y):
        r = y - z
        return 0.5 * float(r @ r)

    def neg_grad(self, z, y):
        return y - z

    def neg_conj(self, alpha, y):
        """``-L*(-alpha)``."""
        return float(y @ alpha) - 0.5 * float(alpha @ alpha)

    def neg_conj_slope(self, c, s, y):
        """Derivative of ``s -> -L*(-s c)``."""
        return float(y @ c) - s * float(c @ c)

    def null_intercept(self, y):
        return float(np.mean(y))

    def predict(self, z):
        return z


class LogisticLoss:
    """``sum_i log(1 + exp(-y_i z_i))`` for labels in {-1, +1}."""

    kind = "logistic"
    gamma = 0.25

    def value(self, z, y):
        return float(np.logaddexp(0.0, -y * z).sum())

    def neg_grad(self, z, y):
        return y * expit(-y * z)

    def neg_conj(self, alpha, y):
        m = alpha * y
        if m.min(initial=0.0) < -FEASIBILITY_SLACK or m.max(initial=0.0) > 1.0 + FEASIBILITY_SLACK:
            return -math.inf
        m = np.clip(m, 0.0, 1.0)
        return -float(np.sum(xlogy(m, m) + xlogy(1.0 - m, 1.0 - m)))

    def neg_conj_slope(self, c, s, y):
        m = s * c * y
        if m.max(initial=0.0) >= 1.0:
            return -math.inf
        m = np.clip(m, 0.0, 1.0)
        nz = m > 0
        return float(np.sum(c[nz] * y[nz] * (np.log1p(-m[nz]) - np.log(m[nz]))))

    def null_intercept(self, y):
        n_pos = int(np.sum(y > 0))
        n_neg = y.shape[0] - n_pos
        if n_pos == 0 or n_neg == 0:
            raise ValueError("logistic loss needs both classes present")
        return math.log(n_pos / n_neg)

    def predict(self, z):
        return np.where(z >= 0, 1.0, -1.0)


LOSSES = {"squared": SquaredLoss, "logistic": LogisticLoss}


def get_loss(kind: str):
    try:
        return LOSSES[kind]()
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}") from None


def default_loss(dataset: Dataset):
    return LogisticLoss() if dataset.task == CLASSIFICATION else SquaredLoss()


def _check_finite(value: float) -> float:
    if not math.isfinite(value):
        raise FloatingPointError("objective overflow")
    return value


def margins(n: int, cols, beta, beta0: float) -> np.ndarray:
    z = np.full(n, float(beta0))
    for rows, b in zip(cols, beta):
        if b != 0.0:
            z[rows] += b
    return z


def penalty(beta, lam: float, kappa: float) -> float:
    beta = np.asarray(beta, dtype=float)
    return lam * (float(np.abs(beta).sum()) + 0.5 * kappa * float(beta @ beta))


def resolve(dataset: Dataset, coefs: Mapping[Pattern, float], supports=None):
    """Split a pattern->coefficient map into aligned (rows list, beta array)."""
    patterns = [p for p, b in coefs.items() if b != 0.0]
    cols = []
    for p in patterns:
        rows = supports.get(p) if supports is not None else None
        cols.append(dataset.support_of(p).rows if rows is None else rows)
    beta = np.array([coefs[p] for p in patterns], dtype=float)
    return patterns, cols, beta


def primal_from_margins(loss, z, y, beta, lam, kappa) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return _check_finite(loss.value(z, y) + penalty(beta, lam, kappa))


def primal_value(dataset, loss, coefs, beta0, lam, kappa, supports=None) -> float:
    _, cols, beta = resolve(dataset, coefs, supports)
    z = margins(dataset.n, cols, beta, beta0)
    return primal_from_margins(loss, z, dataset.labels, beta, lam, kappa)


def conjugate_penalty(excess_sq: float, lam: float, kappa: float) -> float:
    """``Omega*`` from the summed squared exceedances ``sum max(|v|-lam,0)^2``."""
    if excess_sq <= 0.0:
        return 0.0
    if kappa == 0.0:
        return math.inf
    return excess_sq / (2.0 * lam * kappa)


def dual_value(dataset, loss, alpha, lam, kappa=0.0, max_len=None, max_inner=None) -> float:
    """Dual objective at ``alpha``.

    With ``kappa == 0`` the vector must be certified feasible: pass the known
    maximum pattern inner product as ``max_inner`` or a ``max_len`` so it can
    be computed.  With ``kappa > 0`` the conjugate penalty is summed over all
    patterns by a pruned traversal (``max_len`` required).
    """
    if kappa > 0.0:
        if max_len is None:
            raise UnscaledDualError("unscaled dual vector: max_len needed for the conjugate term")
        _, excess = screening.conjugate_excess(dataset, alpha, lam, max_len)
        return loss.neg_conj(alpha, dataset.labels) - conjugate_penalty(excess, lam, kappa)
    if max_inner is None:
        if max_len is None:
            raise UnscaledDualError("unscaled dual vector")
        max_inner, _ = screening.find_max_abs_inner(dataset, alpha, max_len, floor=lam)
    if max_inner > lam * (1.0 + FEASIBILITY_SLACK):
        raise UnscaledDualError(f"unscaled dual vector: max inner {max_inner} > lambda {lam}")
    return loss.neg_conj(alpha, dataset.labels)


def centered_neg_grad(loss, z, y) -> np.ndarray:
    c = loss.neg_grad(z, y)
    return c - c.mean()


def scale_factor(max_inner: float, lam: float) -> float:
    return 1.0 if max_inner <= lam else lam / max_inner


def dual_scale(dataset, loss, coefs, beta0, lam, max_len, supports=None):
    """Dual-feasible ``alpha`` from a primal point.

    Returns ``(alpha, max_inner)`` where ``max_inner`` is the largest
    ``|x_j^T c|`` over all patterns for the centered negative gradient ``c``
    (exact whenever it exceeds ``lam``).  ``alpha = min(1, lam/max_inner) c``.
    """
    _, cols, beta = resolve(dataset, coefs, supports)
    z = margins(dataset.n, cols, beta, beta0)
    c = centered_neg_grad(loss, z, dataset.labels)
    if not np.any(c):
        return np.zeros(dataset.n), 0.0
    m, _ = screening.find_max_abs_inner(dataset, c, max_len, floor=lam)
    return scale_factor(m, lam) * c, m


@dataclass
class DualPoint:
    alpha: np.ndarray
    dual: float
    max_inner: float
    scaled: bool


def best_dual_point(dataset, loss, z, lam, kappa, max_len) -> DualPoint:
    """Feasible dual point for margins ``z`` with the largest dual value.

    The scaled point is always feasible with a zero conjugate term.  For
    ``kappa > 0`` the unscaled centered gradient is feasible too and, unlike
    the scaled one, reaches the dual optimum as the primal converges.
    """
    y = dataset.labels
    c = centered_neg_grad(loss, z, y)
    if not np.any(c):
        return DualPoint(np.zeros(dataset.n), loss.neg_conj(np.zeros(dataset.n), y), 0.0, True)
    if kappa > 0.0:
        m, excess = screening.conjugate_excess(dataset, c, lam, max_len)
    else:
        m, _ = screening.find_max_abs_inner(dataset, c, max_len, floor=lam)
    s = scale_factor(m, lam)
    scaled = DualPoint(s * c, loss.neg_conj(s * c, y), m, True)
    if kappa > 0.0 and s < 1.0:
        d = loss.neg_conj(c, y) - conjugate_penalty(excess, lam, kappa)
        if d > scaled.dual:
            return DualPoint(c, d, m, False)
    return scaled


def dual_upper_bound(loss, z, y, cols, lam, kappa) -> float:
    """Upper bound on :func:`best_dual_point`'s value using only ``cols``.

    Patterns outside ``cols`` can only raise the maximum inner product (so
    shrink the scale) and add conjugate-penalty terms, neither of which can
    increase the dual value while ``s -> -L*(-s c)`` is still nondecreasing at
    the restricted scale.  Returns ``inf`` when no bound is available.
    """
    c = centered_neg_grad(loss, z, y)
    if not np.any(c):
        return math.inf
    inner = np.abs(np.array([c[rows].sum() for rows in cols])) if cols else np.zeros(0)
    m = float(inner.max(initial=0.0))
    s = scale_factor(m, lam)
    if loss.neg_conj_slope(c, s, y) < 0.0:
        return math.inf
    bound = loss.neg_conj(s * c, y)
    if kappa > 0.0 and s < 1.0:
        excess = float(np.sum(np.maximum(inner - lam, 0.0) ** 2))
        bound = max(bound, loss.neg_conj(c, y) - conjugate_penalty(excess, lam, kappa))
    return bound


def evaluate(dataset, loss, cols, beta, beta0, lam, kappa, max_len, z=None):
    """Primal value, best feasible dual point and gap for an iterate."""
    if z is None:
        z = margins(dataset.n, cols, beta, beta0)
    p = primal_from_margins(loss, z, dataset.labels, beta, lam, kappa)
    dp = best_dual_point(dataset, loss, z, lam, kappa, max_len)
    return p, dp


def duality_gap(ref: ReferenceSolution) -> float:
    """``P - D`` of a reference; cached into ``ref.gap``."""
    gap = ref.primal - ref.dual
    if gap < -1e-12 * max(1.0, abs(ref.primal)):
        raise ValueError(f"negative duality gap {gap}: inconsistent reference")
    ref.gap = gap
    return gap


def radius(gap: float, gamma: float) -> float:
    """Screening ball radius ``sqrt(2 gamma gap)``."""
    return math.sqrt(2.0 * gamma * max(gap, 0.0))
