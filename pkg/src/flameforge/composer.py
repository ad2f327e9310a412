"""Pixel-space fusion of augmented masks with style images."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .maskgen import AugmentedMask


@dataclass
class StyleImage:
    rgb: np.ndarray  # (h, w, 3) uint8
    source_id: str

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError("style image must be HxWx3")

    @property
    def dims(self) -> tuple[int, int]:
        h, w = self.rgb.shape[:2]
        return w, h


@dataclass
class CompositeImage:
    rgb: np.ndarray
    mask_ref: str
    style_ref: str

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)

    @property
    def dims(self) -> tuple[int, int]:
        h, w = self.rgb.shape[:2]
        return w, h


def fuse(style: StyleImage, mask: AugmentedMask, alpha: float = 1.0, mask_ref: str = "") -> CompositeImage:
    """Saturating element-wise addition of the mask onto the style image.

    Off-occupancy mask pixels are zero, so the output equals the style image
    there exactly; active pixels get ``clamp(style + alpha * mask)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if style.dims != mask.canvas_size:
        raise ValueError(f"dimension mismatch: style {style.dims} vs mask {mask.canvas_size}")
    out = style.rgb.astype(np.float64) + alpha * mask.rgb.astype(np.float64)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    out[~mask.occupancy] = style.rgb[~mask.occupancy]
    return CompositeImage(rgb=out, mask_ref=mask_ref, style_ref=style.source_id)


def prepare_style(source: str | Path | Image.Image, target: tuple[int, int] = (512, 512)) -> StyleImage:
    """Center-crop to the target aspect ratio, then bilinear-resize."""
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError("target dims must be positive")
    if isinstance(source, Image.Image):
        img = source.convert("RGB")
        source_id = getattr(source, "filename", "") or "<memory>"
    else:
        img = Image.open(source).convert("RGB")
        source_id = str(source)
    w, h = img.size
    target_aspect = tw / th
    if w / h > target_aspect:
        crop_w = int(round(h * target_aspect))
        x0 = (w - crop_w) // 2
        img = img.crop((x0, 0, x0 + crop_w, h))
    elif w / h < target_aspect:
        crop_h = int(round(w / target_aspect))
        y0 = (h - crop_h) // 2
        img = img.crop((0, y0, w, y0 + crop_h))
    if img.size != (tw, th):
        img = img.resize((tw, th), Image.BILINEAR)
    return StyleImage(rgb=np.asarray(img), source_id=source_id)


def neutral_canvas(width: int, height: int, gray: int = 128) -> StyleImage:
    """Neutral-gray stand-in used for the no-style ablation arm."""
    rgb = np.full((height, width, 3), gray, dtype=np.uint8)
    return StyleImage(rgb=rgb, source_id="<neutral-gray>")
