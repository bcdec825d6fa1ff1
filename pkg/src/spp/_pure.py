"""Pure-Python/numpy versions of the compiled kernels in ``_core.pyx``.

Signatures and results match the compiled module; summation order may differ
so results agree to rounding, not bit for bit.
"""

import numpy as np
from scipy.special import expit


def project(indptr, items, rows, pos, alphabet):
    first = {}
    for i, start in zip(rows.tolist(), pos.tolist()):
        seen = set()
        for p in range(start, int(indptr[i + 1])):
            t = int(items[p])
            if t not in seen:
                seen.add(t)
                first.setdefault(t, []).append((i, p + 1))
    child_ids = np.array(sorted(first), dtype=np.int64)
    counts = [len(first[t]) for t in child_ids.tolist()]
    offsets = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    flat = [rp for t in child_ids.tolist() for rp in first[t]]
    child_rows = np.array([r for r, _ in flat], dtype=np.int64)
    child_pos = np.array([p for _, p in flat], dtype=np.int64)
    return child_ids, offsets, child_rows, child_pos


def support_sums(rows, alpha):
    a = alpha[rows]
    return float(a.sum()), float(a[a > 0].sum()), float(a[a < 0].sum())


def _soft(v, lam):
    if v > lam:
        return v - lam
    if v < -lam:
        return v + lam
    return 0.0


def cd_sweep_squared(col_ptr, col_rows, beta, res, lam, kappa):
    dmax = 0.0
    for j in range(beta.shape[0]):
        rows = col_rows[col_ptr[j]:col_ptr[j + 1]]
        a = float(rows.shape[0])
        g = a * beta[j] + float(res[rows].sum())
        b = _soft(g, lam) / (a + lam * kappa)
        d = b - beta[j]
        if d != 0.0:
            beta[j] = b
            res[rows] -= d
            dmax = max(dmax, abs(d))
    return dmax


def _enet(b, lam, kappa):
    return lam * (abs(b) + 0.5 * kappa * b * b)


def cd_sweep_logistic(col_ptr, col_rows, beta, z, y, lam, kappa):
    dmax = 0.0
    for j in range(beta.shape[0]):
        rows = col_rows[col_ptr[j]:col_ptr[j + 1]]
        a = rows.shape[0]
        if a == 0:
            continue
        yr, zr = y[rows], z[rows]
        p = expit(-yr * zr)
        g = -float(np.sum(yr * p))
        h = max(float(np.sum(p * (1.0 - p))), 1e-12 * a)
        b0 = float(beta[j])
        d = _soft(h * b0 - g, lam) / (h + lam * kappa) - b0
        if d == 0.0:
            continue
        model = g * d + _enet(b0 + d, lam, kappa) - _enet(b0, lam, kappa)
        base = float(np.logaddexp(0.0, -yr * zr).sum())
        theta = 1.0
        for _ in range(30):
            change = (
                _enet(b0 + theta * d, lam, kappa) - _enet(b0, lam, kappa)
                + float(np.logaddexp(0.0, -yr * (zr + theta * d)).sum()) - base
            )
            if change <= 0.01 * theta * model:
                d = theta * d
                break
            theta *= 0.5
        else:
            L = 0.25 * a
            d = _soft(L * b0 - g, lam) / (L + lam * kappa) - b0
        if d != 0.0:
            beta[j] = b0 + d
            z[rows] += d
            dmax = max(dmax, abs(d))
    return dmax
