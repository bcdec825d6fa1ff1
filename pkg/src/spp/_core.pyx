# cython: language_level=3
"""Compiled kernels: projected-database expansion, support sums, CD sweeps."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log1p

cnp.import_array()

ctypedef cnp.int64_t i64


def project(const i64[:] indptr, const i64[:] items, const i64[:] rows,
            const i64[:] pos, Py_ssize_t alphabet):
    """Children of a node from its pseudo-projection.

    For every supporting row ``i`` and every distinct id occurring in
    ``items[pos[k]:indptr[i+1]]`` the first occurrence is recorded.
    Returns ``(child_ids, offsets, child_rows, child_pos)``; child ``c`` owns
    ``child_rows[offsets[c]:offsets[c+1]]``.
    """
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t k, p, t, i, c, total = 0, nchild = 0
    cdef i64[:] counts = np.zeros(alphabet, dtype=np.int64)
    cdef i64[:] stamp = np.full(alphabet, -1, dtype=np.int64)
    with nogil:
        for k in range(m):
            i = rows[k]
            for p in range(pos[k], indptr[i + 1]):
                t = items[p]
                if stamp[t] != k:
                    stamp[t] = k
                    counts[t] += 1
                    total += 1
        for t in range(alphabet):
            if counts[t] > 0:
                nchild += 1
    child_ids_arr = np.empty(nchild, dtype=np.int64)
    offsets_arr = np.empty(nchild + 1, dtype=np.int64)
    child_rows_arr = np.empty(total, dtype=np.int64)
    child_pos_arr = np.empty(total, dtype=np.int64)
    cdef i64[:] child_ids = child_ids_arr
    cdef i64[:] offsets = offsets_arr
    cdef i64[:] child_rows = child_rows_arr
    cdef i64[:] child_pos = child_pos_arr
    cdef i64[:] cursor = np.empty(alphabet, dtype=np.int64)
    with nogil:
        c = 0
        offsets[0] = 0
        for t in range(alphabet):
            if counts[t] > 0:
                child_ids[c] = t
                cursor[t] = offsets[c]
                offsets[c + 1] = offsets[c] + counts[t]
                c += 1
            stamp[t] = -1
        for k in range(m):
            i = rows[k]
            for p in range(pos[k], indptr[i + 1]):
                t = items[p]
                if stamp[t] != k:
                    stamp[t] = k
                    child_rows[cursor[t]] = i
                    child_pos[cursor[t]] = p + 1
                    cursor[t] += 1
    return child_ids_arr, offsets_arr, child_rows_arr, child_pos_arr


def support_sums(const i64[:] rows, const double[:] alpha):
    """``(sum, positive part sum, negative part sum)`` of alpha over rows."""
    cdef Py_ssize_t k
    cdef double a, s = 0.0, sp = 0.0, sn = 0.0
    with nogil:
        for k in range(rows.shape[0]):
            a = alpha[rows[k]]
            s += a
            if a > 0:
                sp += a
            elif a < 0:
                sn += a
    return s, sp, sn


cdef inline double soft(double v, double lam) nogil:
    if v > lam:
        return v - lam
    if v < -lam:
        return v + lam
    return 0.0


def cd_sweep_squared(const i64[:] col_ptr, const i64[:] col_rows, double[:] beta,
                     double[:] res, double lam, double kappa):
    """One cyclic pass of exact coordinate minimization, squared loss.

    ``res`` is ``y - X beta - beta0`` and is kept consistent in place.
    Returns the largest absolute coefficient change.
    """
    cdef Py_ssize_t j, k
    cdef double a, g, b, d, dmax = 0.0
    with nogil:
        for j in range(beta.shape[0]):
            a = col_ptr[j + 1] - col_ptr[j]
            g = a * beta[j]
            for k in range(col_ptr[j], col_ptr[j + 1]):
                g += res[col_rows[k]]
            b = soft(g, lam) / (a + lam * kappa)
            d = b - beta[j]
            if d != 0.0:
                beta[j] = b
                for k in range(col_ptr[j], col_ptr[j + 1]):
                    res[col_rows[k]] -= d
                if fabs(d) > dmax:
                    dmax = fabs(d)
    return dmax


cdef inline double softplus(double t) nogil:
    """``log(1 + exp(-t))``, overflow-safe."""
    if t > 0:
        return log1p(exp(-t))
    return -t + log1p(exp(t))


cdef inline double enet(double b, double lam, double kappa) nogil:
    return lam * (fabs(b) + 0.5 * kappa * b * b)


def cd_sweep_logistic(const i64[:] col_ptr, const i64[:] col_rows, double[:] beta,
                      double[:] z, const double[:] y, double lam, double kappa):
    """One cyclic pass of coordinate Newton steps with Armijo backtracking.

    The Newton model uses the exact coordinate curvature; if 30 halvings do
    not give sufficient decrease the step falls back to the global curvature
    bound ``|x_j|^2 / 4``, which always descends.  ``z`` holds the margins
    ``X beta + beta0`` and is updated in place.
    """
    cdef Py_ssize_t j, k, i, it
    cdef double a, g, h, p, b, d, dmax = 0.0, base, theta, change, model, L
    cdef bint ok
    with nogil:
        for j in range(beta.shape[0]):
            a = col_ptr[j + 1] - col_ptr[j]
            if a == 0:
                continue
            g = 0.0
            h = 0.0
            for k in range(col_ptr[j], col_ptr[j + 1]):
                i = col_rows[k]
                p = 1.0 / (1.0 + exp(y[i] * z[i]))
                g -= y[i] * p
                h += p * (1.0 - p)
            if h < 1e-12 * a:
                h = 1e-12 * a
            b = soft(h * beta[j] - g, lam) / (h + lam * kappa)
            d = b - beta[j]
            if d == 0.0:
                continue
            model = g * d + enet(beta[j] + d, lam, kappa) - enet(beta[j], lam, kappa)
            base = 0.0
            for k in range(col_ptr[j], col_ptr[j + 1]):
                i = col_rows[k]
                base += softplus(y[i] * z[i])
            theta = 1.0
            ok = False
            for it in range(30):
                change = enet(beta[j] + theta * d, lam, kappa) - enet(beta[j], lam, kappa) - base
                for k in range(col_ptr[j], col_ptr[j + 1]):
                    i = col_rows[k]
                    change += softplus(y[i] * (z[i] + theta * d))
                if change <= 0.01 * theta * model:
                    ok = True
                    break
                theta *= 0.5
            if ok:
                d = theta * d
            else:
                L = 0.25 * a
                d = soft(L * beta[j] - g, lam) / (L + lam * kappa) - beta[j]
            if d != 0.0:
                beta[j] += d
                for k in range(col_ptr[j], col_ptr[j + 1]):
                    z[col_rows[k]] += d
                if fabs(d) > dmax:
                    dmax = fabs(d)
    return dmax
