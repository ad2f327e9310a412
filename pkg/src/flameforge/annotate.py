"""Paired ground-truth emission: YOLO boxes, mask rasters, JSONL manifest.

Manifest rows are JSON objects with a fixed key order (schema_version v1) so
identical records serialize byte-identically.  All paths inside a manifest are
relative to the dataset root.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .maskgen import AugmentedMask

SCHEMA_VERSION = 1


@dataclass
class DatasetRecord:
    image_path: str
    mask_path: str
    boxes: list[list[float]]  # [class, cx, cy, w, h] normalized
    family: str
    arm: str
    seeds: dict[str, int]
    prompt: str
    style_source: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for box in self.boxes:
            if len(box) != 5 or not all(0.0 <= v <= 1.0 for v in box[1:]):
                raise ValueError(f"invalid YOLO row {box}")


def boxes_from_mask(mask: AugmentedMask, fire_class: int = 0) -> list[list[float]]:
    """One normalized YOLO row per connected component of the mask."""
    if not mask.occupancy.any():
        raise ValueError("mask occupancy is empty")
    w, h = mask.canvas_size
    rows = []
    for x0, y0, x1, y1 in mask.regions:
        rows.append(
            [
                float(fire_class),
                (x0 + x1) / 2 / w,
                (y0 + y1) / 2 / h,
                (x1 - x0) / w,
                (y1 - y0) / h,
            ]
        )
    return rows


def crop_regions(image: np.ndarray, mask: AugmentedMask, pad: float = 0.1) -> list[np.ndarray]:
    """Cut one padded patch per mask region out of the image, clamped to bounds."""
    h, w = image.shape[:2]
    if (w, h) != mask.canvas_size:
        raise ValueError("image/mask dimension mismatch")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    patches = []
    for x0, y0, x1, y1 in mask.regions:
        px = int(round((x1 - x0) * pad))
        py = int(round((y1 - y0) * pad))
        patches.append(
            image[max(0, y0 - py) : min(h, y1 + py), max(0, x0 - px) : min(w, x1 + px)]
        )
    return patches


def record_to_json(record: DatasetRecord) -> str:
    # dataclass field order is the fixed key order of the schema
    return json.dumps(asdict(record), ensure_ascii=False, separators=(", ", ": "))


def yolo_rows_to_text(rows: list[list[float]]) -> str:
    lines = [
        f"{int(cls)} {cx:.6f} {cy:.6f} {bw:.6f} {bh:.6f}" for cls, cx, cy, bw, bh in rows
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class DatasetItem:
    record: DatasetRecord
    image: np.ndarray
    mask_rgb: np.ndarray


def write_dataset(items: list[DatasetItem], root: str | Path) -> Path:
    """Write images/masks as PNG, boxes as YOLO .txt, and the JSONL manifest.

    Returns the manifest path.  Image paths in each record are interpreted
    relative to ``root``; per-image label files sit next to the images with a
    ``.txt`` suffix.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.jsonl"
    lines = []
    for item in items:
        rec = item.record
        img_path = root / rec.image_path
        mask_path = root / rec.mask_path
        img_path.parent.mkdir(parents=True, exist_ok=True)
        mask_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(item.image, dtype=np.uint8)).save(img_path)
        Image.fromarray(np.asarray(item.mask_rgb, dtype=np.uint8)).save(mask_path)
        img_path.with_suffix(".txt").write_text(yolo_rows_to_text(rec.boxes))
        lines.append(record_to_json(rec))
    manifest.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return manifest


def read_manifest(path: str | Path) -> list[DatasetRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        records.append(DatasetRecord(**data))
    return records
