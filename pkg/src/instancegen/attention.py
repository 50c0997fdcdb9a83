"""Per-word attention maps, Otsu foregrounds and anchor points."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from . import kernels
from .backends.base import AttentionRecord


@dataclass(frozen=True)
class AggregationConfig:
    timestep_range: tuple[int, int] = (0, 25)
    layer_range: tuple[int, int] = (2, 20)
    peak_min_distance: int = 2

    def __post_init__(self):
        for name in ("timestep_range", "layer_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} [{lo}, {hi}] is empty")
        if self.peak_min_distance < 1:
            raise ValueError("peak_min_distance must be >= 1")


@dataclass(frozen=True)
class AnchorPoint:
    row: int
    col: int
    word: str
    value: float

    def to_dict(self) -> dict:
        return {"row": self.row, "col": self.col, "word": self.word, "value": round(self.value, 6)}

    @classmethod
    def from_dict(cls, d) -> "AnchorPoint":
        return cls(int(d["row"]), int(d["col"]), d["word"], float(d["value"]))


@dataclass
class WordAttention:
    word: str
    map: np.ndarray
    foreground: np.ndarray
    anchors: list[AnchorPoint] = field(default_factory=list)


class UnknownWordError(KeyError):
    pass


class EmptySegmentError(ValueError):
    """A mask has no pixels at attention resolution."""


def aggregate_word_map(record: AttentionRecord, word: str, cfg: AggregationConfig = AggregationConfig()) -> np.ndarray:
    """Mean over the (layer, timestep) window per token, then max over the word's tokens."""
    tokens = record.tokens_for(word)
    if not tokens:
        raise UnknownWordError(word)
    l_lo, l_hi = cfg.layer_range
    t_lo, t_hi = cfg.timestep_range
    li = [k for k, l in enumerate(record.layers) if l_lo <= l <= l_hi]
    ti = [k for k, t in enumerate(record.timesteps) if t_lo <= t <= t_hi]
    if len(li) != l_hi - l_lo + 1 or len(ti) != t_hi - t_lo + 1:
        raise ValueError(f"aggregation window layers {cfg.layer_range} x timesteps {cfg.timestep_range} "
                         f"is not inside the captured record")
    sub = np.asarray(record.cross, dtype=np.float64)[np.ix_(li, ti, tokens)]
    return sub.mean(axis=(0, 1)).max(axis=0)


def otsu_foreground(word_map: np.ndarray, nbins: int = 256) -> np.ndarray:
    """``value > otsu(map)``; a constant map has no threshold and no foreground."""
    word_map = np.asarray(word_map, dtype=np.float64)
    if not np.all(np.isfinite(word_map)):
        raise ValueError("attention map has non-finite values")
    thr = kernels.otsu_threshold(word_map.ravel(), nbins)
    if np.isnan(thr):
        return np.zeros(word_map.shape, dtype=bool)
    return word_map > thr


def _plateau_representatives(word_map: np.ndarray, candidates: np.ndarray) -> list[tuple[int, int]]:
    """One pixel per 8-connected equal-valued group of candidates: the smallest (row, col)."""
    out = []
    seen = np.zeros(candidates.shape, dtype=bool)
    h, w = candidates.shape
    for r, c in zip(*np.nonzero(candidates)):  # row-major, so the first hit is the smallest
        if seen[r, c]:
            continue
        v = word_map[r, c]
        stack = [(r, c)]
        seen[r, c] = True
        while stack:
            y, x = stack.pop()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and not seen[yy, xx] and candidates[yy, xx] \
                            and word_map[yy, xx] == v:
                        seen[yy, xx] = True
                        stack.append((yy, xx))
        out.append((int(r), int(c)))
    return out


def local_maxima(word_map: np.ndarray, min_distance: int = 2) -> list[tuple[int, int]]:
    """Peaks at least ``min_distance + 1`` apart in Chebyshev distance, strongest first.

    A pixel is a candidate when it equals the maximum of its clipped
    ``(2*min_distance+1)`` window and exceeds the global minimum. Stronger
    peaks suppress weaker ones within ``min_distance``; ties go to the
    smaller ``(row, col)``.
    """
    word_map = np.asarray(word_map, dtype=np.float64)
    if word_map.size == 0:
        return []
    cand = kernels.window_maxima(word_map, min_distance)
    reps = _plateau_representatives(word_map, cand)
    reps.sort(key=lambda rc: (-word_map[rc], rc[0], rc[1]))
    kept: list[tuple[int, int]] = []
    for r, c in reps:
        if all(max(abs(r - kr), abs(c - kc)) > min_distance for kr, kc in kept):
            kept.append((r, c))
    return kept


def extract_anchors(word_map: np.ndarray, foreground: np.ndarray, word: str = "",
                    min_distance: int = 2) -> list[AnchorPoint]:
    word_map = np.asarray(word_map, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=bool)
    if word_map.shape != foreground.shape:
        raise ValueError(f"map {word_map.shape} and foreground {foreground.shape} differ in shape")
    if not foreground.any():
        return []
    return [AnchorPoint(r, c, word, float(word_map[r, c]))
            for r, c in local_maxima(word_map, min_distance) if foreground[r, c]]


def word_attention(record: AttentionRecord, word: str, cfg: AggregationConfig = AggregationConfig()) -> WordAttention:
    m = aggregate_word_map(record, word, cfg)
    fg = otsu_foreground(m)
    return WordAttention(word, m, fg, extract_anchors(m, fg, word, cfg.peak_min_distance))


# ---------------------------------------------------------------------------
# mask registration


def mask_coverage(mask: np.ndarray, grid_shape: tuple[int, int]) -> np.ndarray:
    """Fraction of each attention cell covered by an image-resolution mask."""
    mask = np.asarray(mask, dtype=bool)
    h, w = grid_shape
    H, W = mask.shape
    if (H, W) == (h, w):
        return mask.astype(np.float64)
    if H % h or W % w:
        raise ValueError(f"mask size {(H, W)} is not an integer multiple of attention grid {(h, w)}")
    return mask.reshape(h, H // h, w, W // w).mean(axis=(1, 3))


def downsample_mask(mask: np.ndarray, grid_shape: tuple[int, int]) -> np.ndarray:
    """Area-majority downsampling: a cell is in the mask when at least half of it is covered."""
    return mask_coverage(mask, grid_shape) >= 0.5


def summary_cells(mask: np.ndarray, grid_shape: tuple[int, int]) -> np.ndarray:
    """Majority cells, or the best-covered cell(s) when the majority vote leaves nothing."""
    cov = mask_coverage(mask, grid_shape)
    cells = cov >= 0.5
    if not cells.any() and cov.max() > 0:
        cells = cov == cov.max()
    return cells


def segment_attention_score(word_map: np.ndarray, mask: np.ndarray) -> float:
    """Mean of ``word_map`` over the mask's cells (mask at map or image resolution)."""
    word_map = np.asarray(word_map, dtype=np.float64)
    cells = downsample_mask(mask, word_map.shape)
    if not cells.any():
        raise EmptySegmentError("mask is empty at attention resolution")
    return float(word_map[cells].mean())


# ---------------------------------------------------------------------------
# debug output


def render_word_attention(wa: WordAttention, scale: int = 8) -> np.ndarray:
    """Grayscale map with red anchor dots, as an RGB uint8 array."""
    m = wa.map
    lo, hi = float(m.min()), float(m.max())
    norm = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    gray = np.kron((255 * norm).astype(np.uint8), np.ones((scale, scale), dtype=np.uint8))
    rgb = np.repeat(gray[..., None], 3, axis=2)
    rr, cc = np.mgrid[0:scale, 0:scale]
    dot = (rr - (scale - 1) / 2) ** 2 + (cc - (scale - 1) / 2) ** 2 <= (scale / 3) ** 2
    for a in wa.anchors:
        block = rgb[a.row * scale:(a.row + 1) * scale, a.col * scale:(a.col + 1) * scale]
        block[dot] = (230, 30, 30)
    edge = ndi.binary_dilation(wa.foreground) & ~wa.foreground
    ys, xs = np.nonzero(np.kron(edge, np.ones((scale, scale), dtype=bool)))
    rgb[ys, xs] = np.maximum(rgb[ys, xs], (0, 90, 0)).astype(np.uint8)
    return rgb
