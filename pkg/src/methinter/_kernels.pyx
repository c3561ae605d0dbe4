# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for adaptive-bandwidth Nadaraya-Watson smoothing.

Same signatures and semantics as ``_kernels_py``; selected by ``_backend``.
"""
import numpy as np

from libc.math cimport exp


cdef Py_ssize_t _lower_bound(const double[::1] xs, double t) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = xs.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if xs[mid] < t:
            lo = mid + 1
        else:
            hi = mid
    return lo


def kth_nearest_distances(const double[::1] positions, const double[::1] targets, Py_ssize_t k):
    """Distance from every target to its k-th nearest position (positions sorted)."""
    cdef Py_ssize_t n = positions.shape[0], m = targets.shape[0]
    cdef Py_ssize_t i, step, left, right
    cdef double t, d, dl, dr
    if n == 0:
        raise ValueError("empty site list")
    if k < 1 or k > n:
        raise ValueError("k must lie in [1, number of sites]")
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(m):
            t = targets[i]
            right = _lower_bound(positions, t)
            left = right - 1
            d = 0.0
            for step in range(k):
                if left < 0:
                    d = positions[right] - t
                    right += 1
                elif right >= n:
                    d = t - positions[left]
                    left -= 1
                else:
                    dl = t - positions[left]
                    dr = positions[right] - t
                    if dl <= dr:
                        d = dl
                        left -= 1
                    else:
                        d = dr
                        right += 1
            res[i] = d
    return out


def nw_smooth_rows(const double[::1] positions, const double[:, ::1] levels,
                   const double[::1] targets, const double[::1] bandwidths):
    """Gaussian Nadaraya-Watson estimate at ``targets`` for every row of ``levels``.

    Rows share ``positions``; the kernel weights are computed once per target.
    Returns an array of shape (rows, targets). Targets whose weights all
    underflow are reported through the second return value (-1 if none).
    """
    cdef Py_ssize_t n = positions.shape[0], m = targets.shape[0], r = levels.shape[0]
    cdef Py_ssize_t i, j, row, bad = -1
    cdef double t, inv_h, u, wsum, a0, a1, a2, a3
    if levels.shape[1] != n:
        raise ValueError("levels and positions disagree in length")
    if bandwidths.shape[0] != m:
        raise ValueError("one bandwidth per target required")
    out = np.empty((r, m), dtype=np.float64)
    w_buf = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double[::1] w = w_buf
    with nogil:
        for i in range(m):
            t = targets[i]
            inv_h = 1.0 / bandwidths[i]
            wsum = 0.0
            for j in range(n):
                u = (positions[j] - t) * inv_h
                w[j] = exp(-0.5 * u * u)
                wsum += w[j]
            if not (wsum > 0.0):
                if bad < 0:
                    bad = i
                for row in range(r):
                    res[row, i] = 0.0
                continue
            # four rows per sweep so each weight is loaded once per block
            row = 0
            while row + 4 <= r:
                a0 = a1 = a2 = a3 = 0.0
                for j in range(n):
                    a0 += w[j] * levels[row, j]
                    a1 += w[j] * levels[row + 1, j]
                    a2 += w[j] * levels[row + 2, j]
                    a3 += w[j] * levels[row + 3, j]
                res[row, i] = a0 / wsum
                res[row + 1, i] = a1 / wsum
                res[row + 2, i] = a2 / wsum
                res[row + 3, i] = a3 / wsum
                row += 4
            while row < r:
                a0 = 0.0
                for j in range(n):
                    a0 += w[j] * levels[row, j]
                res[row, i] = a0 / wsum
                row += 1
    return out, bad
