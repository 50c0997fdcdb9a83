"""Instance layouts: detector and point-prompt masks reconciled into disjoint,
margin-separated instances, plus the per-segment summary for assignment.

All mask arithmetic runs at image resolution. Anchors live on the attention
grid; cell ``(r, c)`` maps to image pixel ``(r*s + s//2, c*s + s//2)`` for an
integer scale ``s``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage as ndi

from .attention import AnchorPoint, summary_cells

log = logging.getLogger(__name__)

PROVENANCES = ("detector", "point_prompt", "copied")
_CROSS = np.ones((3, 3), dtype=bool)


class CopyPlacementError(RuntimeError):
    """Instance copying could not place a copy."""


class InsufficientBackgroundError(CopyPlacementError):
    pass


@dataclass(frozen=True)
class LayoutConfig:
    max_area_fraction: float = 0.33
    merge_overlap: float = 0.666
    min_pixels: int = 30
    margin: int = 2
    background_erosion: int = 2
    max_copy_failures: int = 100


@dataclass
class InstanceMask:
    id: int
    pixels: np.ndarray
    anchors: list[AnchorPoint] = field(default_factory=list)
    provenance: str = "detector"
    source_id: int | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=bool)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    def copy(self, **changes) -> "InstanceMask":
        base = replace(self, pixels=self.pixels.copy(), anchors=list(self.anchors))
        return replace(base, **changes) if changes else base


@dataclass
class InstanceLayout:
    masks: list[InstanceMask]
    image_size: tuple[int, int]
    scale: int = 1
    summary: dict | None = None
    dropped_anchors: list[AnchorPoint] = field(default_factory=list)

    @property
    def deficient(self) -> bool:
        """Some anchor ended up outside every mask."""
        return bool(self.dropped_anchors)

    def mask_by_id(self, mask_id: int) -> InstanceMask:
        for m in self.masks:
            if m.id == mask_id:
                return m
        raise KeyError(mask_id)

    def label_image(self) -> np.ndarray:
        out = np.zeros(self.image_size, dtype=np.int32)
        for m in self.masks:
            out[m.pixels] = m.id
        return out


# ---------------------------------------------------------------------------
# geometry helpers


def anchor_pixel(anchor: AnchorPoint, scale: int) -> tuple[int, int]:
    return anchor.row * scale + scale // 2, anchor.col * scale + scale // 2


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def near(mask: np.ndarray, radius: int) -> np.ndarray:
    """Pixels within Chebyshev distance ``radius`` of ``mask``."""
    if radius <= 0 or not mask.any():
        return mask.copy()
    return ndi.binary_dilation(mask, structure=_square(radius))


def min_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest Chebyshev distance between a pixel of ``a`` and a pixel of ``b``."""
    if not a.any() or not b.any():
        return float("inf")
    d = ndi.distance_transform_cdt(~b, metric="chessboard")
    return float(d[a].min())


def _renumber(masks: Sequence[InstanceMask], start: int = 1) -> list[InstanceMask]:
    return [replace(m, id=k) for k, m in enumerate(masks, start=start)]


# ---------------------------------------------------------------------------
# construction steps


def filter_oversized(masks: Sequence[InstanceMask], image_area: int,
                     max_fraction: float = LayoutConfig.max_area_fraction) -> list[InstanceMask]:
    return [m for m in masks if m.area / image_area <= max_fraction]


def assign_anchors(anchors: Iterable[AnchorPoint], masks: Sequence[InstanceMask],
                   scale: int = 1) -> tuple[list[InstanceMask], list[AnchorPoint]]:
    """Each anchor joins the smallest mask containing it (ties: lower id).

    Returns the masks that received anchors and the anchors no mask contains.
    """
    got: dict[int, list[AnchorPoint]] = {m.id: [] for m in masks}
    unresolved = []
    by_size = sorted(masks, key=lambda m: (m.area, m.id))
    for a in anchors:
        r, c = anchor_pixel(a, scale)
        home = next((m for m in by_size if m.pixels[r, c]), None)
        if home is None:
            unresolved.append(a)
        else:
            got[home.id].append(a)
    kept = [m.copy(anchors=got[m.id]) for m in masks if got[m.id]]
    return kept, unresolved


def resolve_detector_overlaps(masks: Sequence[InstanceMask]) -> list[InstanceMask]:
    """Overlaps go to the mask that was smaller before resolution (ties: lower id)."""
    out = [m.copy() for m in sorted(masks, key=lambda m: m.id)]
    area = {m.id: m.area for m in out}
    for a, b in itertools.combinations(out, 2):
        overlap = a.pixels & b.pixels
        if not overlap.any():
            continue
        loser = b if (area[a.id], a.id) < (area[b.id], b.id) else a
        loser.pixels &= ~overlap
    return out


def merge_point_masks(candidates: Sequence[InstanceMask],
                      threshold: float = LayoutConfig.merge_overlap) -> list[InstanceMask]:
    """Union heavily-overlapping pairs; otherwise hand the overlap to the smaller mask.

    Repeats over ascending id pairs until no pair overlaps.
    """
    out = [m.copy() for m in sorted(candidates, key=lambda m: m.id)]
    changed = True
    while changed:
        changed = False
        for a, b in itertools.combinations(out, 2):
            overlap = a.pixels & b.pixels
            n = int(overlap.sum())
            if n == 0:
                continue
            if n >= threshold * a.area and n >= threshold * b.area:
                a.pixels |= b.pixels
                a.anchors = a.anchors + b.anchors
                out.remove(b)
            else:
                loser = b if (a.area, a.id) < (b.area, b.id) else a
                loser.pixels &= ~overlap
            changed = True
            break
    return out


def postprocess(masks: Sequence[InstanceMask], min_pixels: int = LayoutConfig.min_pixels,
                margin: int = LayoutConfig.margin, protected: Iterable[int] = ()) -> list[InstanceMask]:
    """Drop small masks and open a ``margin``-pixel gap between every pair.

    For a pair closer than the margin, pixels of the larger mask (equal size:
    the higher id) within ``margin`` of the other are removed. Masks whose id
    is in ``protected`` are never eroded; their partner gives way instead.
    """
    protected = set(protected)
    out = [m.copy() for m in sorted(masks, key=lambda m: m.id) if m.area >= min_pixels]
    # erosion only removes pixels, so a pair fixed once stays fixed: one pass is enough
    for a, b in itertools.combinations(out, 2):
        if min_gap(a.pixels, b.pixels) > margin:
            continue
        big, small = (b, a) if (a.area, a.id) < (b.area, b.id) else (a, b)
        if big.id in protected:
            big, small = small, big
        if big.id in protected:
            log.warning("masks %d and %d are both protected and closer than the margin", a.id, b.id)
            continue
        big.pixels &= ~near(small.pixels, margin)
    return [m for m in out if m.area >= min_pixels]


def point_prompt_masks(image, unresolved: Sequence[AnchorPoint], segment: Callable, scale: int = 1,
                       first_id: int = 1) -> list[InstanceMask]:
    """One candidate per unresolved anchor from ``segment(image, (row, col))``; empties dropped."""
    out = []
    for a in unresolved:
        pixels = np.asarray(segment(image, anchor_pixel(a, scale)), dtype=bool)
        if pixels.any():
            out.append(InstanceMask(first_id + len(out), pixels, [a], "point_prompt"))
    return out


def attach_anchors(masks: Sequence[InstanceMask], anchors: Iterable[AnchorPoint],
                   scale: int) -> tuple[list[InstanceMask], list[AnchorPoint]]:
    """Recompute anchor membership against final pixels."""
    got: dict[int, list[AnchorPoint]] = {m.id: [] for m in masks}
    dropped = []
    for a in anchors:
        r, c = anchor_pixel(a, scale)
        home = next((m for m in masks if m.pixels[r, c]), None)
        if home is None:
            dropped.append(a)
        else:
            got[home.id].append(a)
    return [replace(m, anchors=got[m.id]) for m in masks], dropped


def build_layout(image, anchors: Sequence[AnchorPoint], detections, segment: Callable,
                 scale: int, config: LayoutConfig = LayoutConfig()) -> InstanceLayout:
    """Full construction from anchors, detector output and a point segmenter."""
    image = np.asarray(image)
    H, W = image.shape[:2]
    det = [InstanceMask(k, np.asarray(m, dtype=bool), [], "detector")
           for k, (m, _label, _conf) in enumerate(detections, start=1)]
    det = filter_oversized(det, H * W, config.max_area_fraction)
    kept, unresolved = assign_anchors(anchors, det, scale)
    kept = _renumber(resolve_detector_overlaps(kept))
    points = point_prompt_masks(image, unresolved, segment, scale, first_id=len(kept) + 1)
    points = merge_point_masks(points, config.merge_overlap)
    combined = resolve_detector_overlaps(_renumber(kept + points))
    final = postprocess(combined, config.min_pixels, config.margin)
    final, dropped = attach_anchors(final, anchors, scale)
    return InstanceLayout(_renumber(final), (H, W), scale, dropped_anchors=dropped)


# ---------------------------------------------------------------------------
# repair and summary


def required_instance_count(parsed) -> int:
    return sum(spec.desired_quantity for spec in parsed.objects.values())


def copy_instances(layout: InstanceLayout, deficit: int, rng_seed: int,
                   config: LayoutConfig = LayoutConfig()) -> InstanceLayout:
    """Add ``deficit`` copies of original masks into free background."""
    if deficit < 1:
        raise ValueError("deficit must be >= 1")
    originals = [m for m in layout.masks if m.provenance != "copied"]
    if not originals:
        raise CopyPlacementError("layout has no original masks to copy")
    rng = np.random.default_rng(rng_seed)
    masks = [m.copy() for m in layout.masks]
    H, W = layout.image_size
    s = layout.scale
    for _ in range(deficit):
        for failures in range(config.max_copy_failures + 1):
            if failures == config.max_copy_failures:
                raise CopyPlacementError(f"no valid placement after {failures} attempts")
            occupied = np.zeros((H, W), dtype=bool)
            for m in masks:
                occupied |= m.pixels
            background = ndi.binary_erosion(~occupied, structure=_CROSS, iterations=config.background_erosion)
            spots = np.flatnonzero(background)
            if spots.size == 0:
                raise InsufficientBackgroundError("no background left after erosion")
            src = originals[int(rng.integers(len(originals)))]
            r, c = divmod(int(spots[int(rng.integers(spots.size))]), W)
            ys, xs = np.nonzero(src.pixels)
            dy, dx = r - int(round(ys.mean())), c - int(round(xs.mean()))
            ny, nx = ys + dy, xs + dx
            inside = (ny >= 0) & (ny < H) & (nx >= 0) & (nx < W)
            pixels = np.zeros((H, W), dtype=bool)
            pixels[ny[inside], nx[inside]] = True
            pixels &= ~near(occupied, config.margin)  # overlap removal plus margin, copy side only
            if pixels.sum() < config.min_pixels:
                continue
            moved = []
            for a in src.anchors:
                pr, pc = anchor_pixel(a, s)
                qr, qc = pr + dy, pc + dx
                if 0 <= qr < H and 0 <= qc < W and pixels[qr, qc]:
                    moved.append(AnchorPoint(qr // s, qc // s, a.word, a.value))
            masks.append(InstanceMask(len(masks) + 1, pixels, moved, "copied", source_id=src.id))
            break
    return InstanceLayout(masks, layout.image_size, s, dropped_anchors=list(layout.dropped_anchors))


def _fmt(value: float, digits: int) -> str:
    return f"{value:.{digits}f}"


def build_summary(layout: InstanceLayout, word_maps: Mapping[str, np.ndarray],
                  attribute_maps: Mapping[str, np.ndarray]) -> dict:
    """Per-mask size, centroid position and attention scores, all as strings."""
    H, W = layout.image_size
    out = {}
    any_map = next(iter(word_maps.values()), None)
    if any_map is None:
        any_map = next(iter(attribute_maps.values()))
    grid = np.asarray(any_map).shape
    for m in layout.masks:
        cells = summary_cells(m.pixels, grid)
        ys, xs = np.nonzero(m.pixels)
        entry = {
            "cluster_size": _fmt(float(cells.sum()), 1),
            "distance_from_top": _fmt(100.0 * (ys.mean() + 0.5) / H, 1),
            "distance_from_left": _fmt(100.0 * (xs.mean() + 0.5) / W, 1),
            "object_probabilities": {w: _fmt(float(np.asarray(mp)[cells].mean()), 2) for w, mp in word_maps.items()},
            "attribute_probabilities": {a: _fmt(float(np.asarray(mp)[cells].mean()), 3)
                                        for a, mp in attribute_maps.items()},
        }
        out[str(m.id)] = entry
    return out


# ---------------------------------------------------------------------------
# checks and rendering


def layout_violations(layout: InstanceLayout, config: LayoutConfig = LayoutConfig()) -> list[str]:
    """Broken invariants of a finished layout (empty when all hold)."""
    bad = []
    ids = [m.id for m in layout.masks]
    if ids != list(range(1, len(ids) + 1)):
        bad.append(f"ids not 1..N: {ids}")
    for m in layout.masks:
        if m.area < config.min_pixels:
            bad.append(f"mask {m.id} has {m.area} < {config.min_pixels} pixels")
        for a in m.anchors:
            r, c = anchor_pixel(a, layout.scale)
            if not m.pixels[r, c]:
                bad.append(f"anchor {a} listed on mask {m.id} but outside it")
    for a, b in itertools.combinations(layout.masks, 2):
        if (a.pixels & b.pixels).any():
            bad.append(f"masks {a.id} and {b.id} overlap")
        elif min_gap(a.pixels, b.pixels) <= config.margin:
            bad.append(f"masks {a.id} and {b.id} are within {config.margin} px")
    return bad


def render_layout(image: np.ndarray, layout: InstanceLayout, alpha: float = 0.5) -> np.ndarray:
    import colorsys

    out = np.asarray(image, dtype=np.float64).copy()
    for m in layout.masks:
        hue = (m.id * 0.61803398875) % 1.0
        color = 255.0 * np.array(colorsys.hsv_to_rgb(hue, 0.9, 0.95))
        out[m.pixels] = (1 - alpha) * out[m.pixels] + alpha * color
        edge = m.pixels & ~ndi.binary_erosion(m.pixels)
        out[edge] = color
        for a in m.anchors:
            r, c = anchor_pixel(a, layout.scale)
            out[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = (255, 255, 255)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
