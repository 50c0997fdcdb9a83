"""Run-artifact serialization: row run-length masks, JSON, PNG, CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .attention import AnchorPoint
from .layout import InstanceLayout, InstanceMask


def rle_encode(mask: np.ndarray) -> list[list[int]]:
    """``[row, start_col, length]`` for every horizontal run of set pixels."""
    mask = np.asarray(mask, dtype=bool)
    runs = []
    padded = np.zeros((mask.shape[0], mask.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    edges = np.diff(padded, axis=1)
    for r in range(mask.shape[0]):
        starts = np.flatnonzero(edges[r] == 1)
        ends = np.flatnonzero(edges[r] == -1)
        runs.extend([r, int(s), int(e - s)] for s, e in zip(starts, ends))
    return runs


def rle_decode(runs: Iterable, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for r, s, n in runs:
        out[r, s:s + n] = True
    return out


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_png(path: Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
    return path


def load_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def layout_to_wire(layout: InstanceLayout) -> dict:
    return {
        "image_size": list(layout.image_size),
        "scale": layout.scale,
        "deficient": layout.deficient,
        "dropped_anchors": [a.to_dict() for a in layout.dropped_anchors],
        "masks": [
            {
                "id": m.id,
                "provenance": m.provenance,
                "source_id": m.source_id,
                "area": m.area,
                "anchors": [a.to_dict() for a in m.anchors],
                "rle_rows": rle_encode(m.pixels),
            }
            for m in layout.masks
        ],
    }


def layout_from_wire(data: dict) -> InstanceLayout:
    shape = tuple(data["image_size"])
    masks = [
        InstanceMask(m["id"], rle_decode(m["rle_rows"], shape), [AnchorPoint.from_dict(a) for a in m["anchors"]],
                     m["provenance"], m.get("source_id"))
        for m in data["masks"]
    ]
    dropped = [AnchorPoint.from_dict(a) for a in data.get("dropped_anchors", [])]
    return InstanceLayout(masks, shape, int(data.get("scale", 1)), dropped_anchors=dropped)


TRACE_COLUMNS = ("timestep", "iteration", "obj", "att", "bg", "total")


def write_trace_csv(path: Path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow([r.timestep, r.iteration, repr(r.obj), repr(r.att), repr(r.bg), repr(r.total)])
    return path
