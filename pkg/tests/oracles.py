"""Reference computations written independently of the package code.

Plain Python loops over pixels, no shared helpers with ``instancegen``.
"""

from __future__ import annotations

import math

import numpy as np


def bce_loop(C, m, fg_weight=1.5, bg_weight=1.0, eps=1e-6) -> float:
    total = 0.0
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            c = min(max(float(C[i, j]), eps), 1.0 - eps)
            if m[i, j]:
                total += -fg_weight * math.log(c)
            else:
                total += -bg_weight * math.log(1.0 - c)
    return total


def ce_loop(C, m, eps=1e-6) -> float:
    total = 0.0
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            if m[i, j]:
                total += -math.log(min(max(float(C[i, j]), eps), 1.0 - eps))
    return total


def bg_loop(z_ref, z, B) -> float:
    z_ref = np.atleast_3d(np.moveaxis(np.asarray(z_ref, dtype=float), 0, -1)) if np.ndim(z_ref) == 3 else \
        np.asarray(z_ref, dtype=float)[..., None]
    z = np.atleast_3d(np.moveaxis(np.asarray(z, dtype=float), 0, -1)) if np.ndim(z) == 3 else \
        np.asarray(z, dtype=float)[..., None]
    total, n = 0.0, 0
    for i in range(B.shape[0]):
        for j in range(B.shape[1]):
            if B[i, j]:
                for c in range(z.shape[2]):
                    total += (z_ref[i, j, c] - z[i, j, c]) ** 2
                    n += 1
    return total / n if n else 0.0


def central_difference(f, x, h=1e-5) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def window_max_loop(grid, radius):
    h, w = grid.shape
    gmin = grid.min()
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            v = grid[r, c]
            if v <= gmin:
                continue
            ok = True
            for rr in range(max(0, r - radius), min(h, r + radius + 1)):
                for cc in range(max(0, c - radius), min(w, c + radius + 1)):
                    if grid[rr, cc] > v:
                        ok = False
            out[r, c] = ok
    return out


def chebyshev_gap(a, b) -> float:
    pa = np.argwhere(a)
    pb = np.argwhere(b)
    if len(pa) == 0 or len(pb) == 0:
        return math.inf
    best = math.inf
    for p in pa:
        d = np.abs(pb - p).max(axis=1).min()
        best = min(best, float(d))
    return best


def layout_problems(masks, anchor_pixels, min_pixels=30, margin=2) -> list[str]:
    """Invariant violations for a list of boolean masks and anchor pixel coords."""
    bad = []
    for k, m in enumerate(masks):
        if m.sum() < min_pixels:
            bad.append(f"mask {k} has {int(m.sum())} px")
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if (masks[i] & masks[j]).any():
                bad.append(f"masks {i},{j} overlap")
            elif chebyshev_gap(masks[i], masks[j]) <= margin:
                bad.append(f"masks {i},{j} closer than {margin + 1}px")
    for r, c in anchor_pixels:
        homes = sum(bool(m[r, c]) for m in masks)
        if homes != 1:
            bad.append(f"anchor ({r},{c}) in {homes} masks")
    return bad
