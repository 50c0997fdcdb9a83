# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops. Signatures mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def weighted_bce(double[:, ::1] attn, const unsigned char[:, ::1] mask,
                 double fg_weight, double bg_weight, double eps):
    cdef Py_ssize_t h = attn.shape[0], w = attn.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, loss = 0.0
    grad_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    for i in range(h):
        for j in range(w):
            c = attn[i, j]
            if c < eps:
                c = eps
                if mask[i, j]:
                    loss -= fg_weight * log(c)
                else:
                    loss -= bg_weight * log(1.0 - c)
                continue
            if c > 1.0 - eps:
                c = 1.0 - eps
                if mask[i, j]:
                    loss -= fg_weight * log(c)
                else:
                    loss -= bg_weight * log(1.0 - c)
                continue
            if mask[i, j]:
                loss -= fg_weight * log(c)
                grad[i, j] = -fg_weight / c
            else:
                loss -= bg_weight * log(1.0 - c)
                grad[i, j] = bg_weight / (1.0 - c)
    return loss, grad_arr


def masked_ce(double[:, ::1] attn, const unsigned char[:, ::1] mask, double eps):
    cdef Py_ssize_t h = attn.shape[0], w = attn.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, loss = 0.0
    grad_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            c = attn[i, j]
            if c < eps:
                loss -= log(eps)
            elif c > 1.0 - eps:
                loss -= log(1.0 - eps)
            else:
                loss -= log(c)
                grad[i, j] = -1.0 / c
    return loss, grad_arr


def otsu_threshold(double[::1] values, int nbins):
    cdef Py_ssize_t n = values.shape[0], k
    cdef double lo, hi, width, best, w0, w1, m0, m1, between, total_sum = 0.0
    cdef double cum_w = 0.0, cum_s = 0.0
    cdef int b, best_idx = 0
    if n == 0:
        return float("nan")
    lo = values[0]
    hi = values[0]
    for k in range(n):
        if values[k] < lo:
            lo = values[k]
        if values[k] > hi:
            hi = values[k]
    if hi <= lo:
        return float("nan")
    width = (hi - lo) / nbins
    counts_arr = np.zeros(nbins, dtype=np.float64)
    cdef double[::1] counts = counts_arr
    for k in range(n):
        b = <int>((values[k] - lo) / width)
        if b >= nbins:
            b = nbins - 1
        counts[b] += 1.0
    for b in range(nbins):
        total_sum += counts[b] * (lo + (b + 0.5) * width)
    best = -1.0
    for b in range(nbins - 1):
        cum_w += counts[b]
        cum_s += counts[b] * (lo + (b + 0.5) * width)
        w0 = cum_w
        w1 = n - cum_w
        if w0 == 0 or w1 == 0:
            continue
        m0 = cum_s / w0
        m1 = (total_sum - cum_s) / w1
        between = w0 * w1 * (m0 - m1) * (m0 - m1)
        if between > best:
            best = between
            best_idx = b
    return lo + (best_idx + 0.5) * width


def window_maxima(double[:, ::1] grid, int radius):
    cdef Py_ssize_t h = grid.shape[0], w = grid.shape[1]
    cdef Py_ssize_t i, j, a, b, a0, a1, b0, b1
    cdef double v, floor_v
    cdef bint is_max
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    if h == 0 or w == 0:
        return out_arr.astype(bool)
    floor_v = grid[0, 0]
    for i in range(h):
        for j in range(w):
            if grid[i, j] < floor_v:
                floor_v = grid[i, j]
    for i in range(h):
        a0 = i - radius if i >= radius else 0
        a1 = i + radius + 1 if i + radius + 1 <= h else h
        for j in range(w):
            v = grid[i, j]
            if v <= floor_v:
                continue
            b0 = j - radius if j >= radius else 0
            b1 = j + radius + 1 if j + radius + 1 <= w else w
            is_max = True
            for a in range(a0, a1):
                for b in range(b0, b1):
                    if grid[a, b] > v:
                        is_max = False
                        break
                if not is_max:
                    break
            if is_max:
                out[i, j] = 1
    return out_arr.astype(bool)
