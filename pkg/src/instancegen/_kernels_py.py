"""NumPy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. Loss sums may
differ from the compiled versions in the last few ulps (pairwise vs.
sequential summation); thresholds and maxima agree exactly.
"""

import numpy as np
from scipy import ndimage as ndi


def weighted_bce(attn, mask, fg_weight, bg_weight, eps):
    fg = mask.astype(bool)
    c = np.clip(attn, eps, 1.0 - eps)
    inside = (attn >= eps) & (attn <= 1.0 - eps)
    weight = np.where(fg, fg_weight, bg_weight)
    terms = np.where(fg, np.log(c), np.log(1.0 - c))
    loss = -float(np.sum(weight * terms))
    grad = np.where(fg, -fg_weight / c, bg_weight / (1.0 - c))
    grad = np.where(inside, grad, 0.0)
    return loss, grad


def masked_ce(attn, mask, eps):
    fg = mask.astype(bool)
    c = np.clip(attn, eps, 1.0 - eps)
    inside = (attn >= eps) & (attn <= 1.0 - eps)
    loss = -float(np.sum(np.log(c[fg])))
    grad = np.where(fg & inside, -1.0 / c, 0.0)
    return loss, grad


def otsu_threshold(values, nbins):
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return float("nan")
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return float("nan")
    width = (hi - lo) / nbins
    idx = np.minimum(((values - lo) / width).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins).astype(np.float64)
    centers = lo + (np.arange(nbins) + 0.5) * width
    weighted = counts * centers
    total_sum = np.cumsum(weighted)[-1]
    cum_w = np.cumsum(counts)[:-1]
    cum_s = np.cumsum(weighted)[:-1]
    w0 = cum_w
    w1 = values.size - cum_w
    valid = (w0 > 0) & (w1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = cum_s / w0
        m1 = (total_sum - cum_s) / w1
        between = w0 * w1 * (m0 - m1) * (m0 - m1)
    between = np.where(valid, between, -1.0)
    best_idx = int(np.argmax(between)) if np.any(valid) else 0
    return float(lo + (best_idx + 0.5) * width)


def window_maxima(grid, radius):
    if grid.size == 0:
        return np.zeros(grid.shape, dtype=bool)
    size = 2 * radius + 1
    local_max = ndi.maximum_filter(grid, size=size, mode="constant", cval=-np.inf)
    return (grid >= local_max) & (grid > grid.min())
