"""Geometric fire-mask generation and the four augmentation families.

Family chain: Binary -> Colored -> {Noise | Perlin}.  Every operation is
deterministic given its inputs and seed; rgb is zero wherever occupancy is
zero, and region boxes are the tight axis-aligned bounding boxes of the
8-connected components of the occupancy raster.

Boxes are half-open pixel rectangles ``(x0, y0, x1, y1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .noisefield import PerlinParams, render_field, splitmix64

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
MIN_REGION_AREA = 32 * 32


class MaskFamily(enum.Enum):
    BINARY = "binary"
    COLORED = "colored"
    NOISE = "noise"
    PERLIN = "perlin"


class ShapeKind(enum.Enum):
    RECTANGLE = "rectangle"
    CIRCLE = "circle"
    ELLIPSE = "ellipse"


class PaletteError(ValueError):
    """No usable fire pixels in the palette source."""


class AnnotationFormatError(ValueError):
    """A YOLO annotation row could not be parsed."""


@dataclass(frozen=True)
class ShapeSpec:
    kind: ShapeKind
    center: tuple[float, float]
    extents: tuple[float, float]  # full width/height; circle: equal diameters
    rotation: float = 0.0

    def __post_init__(self):
        w, h = self.extents
        if w <= 0 or h <= 0:
            raise ValueError("extents must be strictly positive")
        if self.kind is ShapeKind.CIRCLE and abs(w - h) > 1e-9:
            raise ValueError("circle extents must be equal")
        if self.area < MIN_REGION_AREA:
            raise ValueError(
                f"shape area {self.area:.0f} below minimum {MIN_REGION_AREA}"
            )

    @property
    def area(self) -> float:
        w, h = self.extents
        if self.kind is ShapeKind.RECTANGLE:
            return w * h
        return math.pi * (w / 2) * (h / 2)

    def bounding_box(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounding box of the rotated shape, float pixel coords."""
        cx, cy = self.center
        a, b = self.extents[0] / 2, self.extents[1] / 2
        c, s = abs(math.cos(self.rotation)), abs(math.sin(self.rotation))
        if self.kind is ShapeKind.RECTANGLE:
            hx, hy = a * c + b * s, a * s + b * c
        elif self.kind is ShapeKind.CIRCLE:
            hx = hy = a
        else:
            hx = math.sqrt((a * c) ** 2 + (b * s) ** 2)
            hy = math.sqrt((a * s) ** 2 + (b * c) ** 2)
        return (cx - hx, cy - hy, cx + hx, cy + hy)

    def rasterize(self, canvas_w: int, canvas_h: int) -> np.ndarray:
        """Boolean occupancy of the shape sampled at pixel centers."""
        # only pixels inside the (1-pixel padded) bounding box can be active
        bx0, by0, bx1, by1 = self.bounding_box()
        x0 = max(0, int(math.floor(bx0)) - 1)
        y0 = max(0, int(math.floor(by0)) - 1)
        x1 = min(canvas_w, int(math.ceil(bx1)) + 1)
        y1 = min(canvas_h, int(math.ceil(by1)) + 1)
        out = np.zeros((canvas_h, canvas_w), dtype=bool)
        if x0 >= x1 or y0 >= y1:
            return out
        dx = (np.arange(x0, x1) + 0.5) - self.center[0]  # (w,)
        dy = (np.arange(y0, y1) + 0.5)[:, None] - self.center[1]  # (h, 1)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        # inverse rotation into the shape frame (broadcasts to (h, w))
        u = c * dx + s * dy
        v = -s * dx + c * dy
        a, b = self.extents[0] / 2, self.extents[1] / 2
        if self.kind is ShapeKind.RECTANGLE:
            out[y0:y1, x0:x1] = (np.abs(u) <= a) & (np.abs(v) <= b)
        else:
            out[y0:y1, x0:x1] = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        return out


@dataclass(frozen=True)
class MaskSpec:
    canvas_w: int
    canvas_h: int
    regions: tuple[ShapeSpec, ...]
    family: MaskFamily
    rng_seed: int
    sigma: float = 0.0
    perlin: PerlinParams | None = None
    max_regions: int = 3

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not 1 <= len(self.regions) <= self.max_regions:
            raise ValueError(
                f"region count {len(self.regions)} outside [1, {self.max_regions}]"
            )
        if self.sigma != 0.0 and self.family is not MaskFamily.NOISE:
            raise ValueError("sigma only meaningful for the Noise family")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for shape in self.regions:
            x0, y0, x1, y1 = shape.bounding_box()
            if x0 < 0 or y0 < 0 or x1 > self.canvas_w or y1 > self.canvas_h:
                raise ValueError(f"shape bounding box {shape.bounding_box()} outside canvas")


@dataclass(frozen=True)
class FirePalette:
    colors: np.ndarray  # (n, 3) uint8
    source_count: int

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        object.__setattr__(self, "colors", colors)
        if len(colors) == 0:
            raise PaletteError("palette has no colors")


@dataclass
class AugmentedMask:
    rgb: np.ndarray  # (h, w, 3) uint8
    occupancy: np.ndarray  # (h, w) bool
    regions: list[tuple[int, int, int, int]]
    family: MaskFamily

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.rgb.shape[:2] != self.occupancy.shape:
            raise ValueError("rgb/occupancy shape mismatch")
        if not self.occupancy.any():
            raise ValueError("occupancy must have at least one active pixel")
        # zero outside occupancy <=> masking by occupancy removes no nonzeros
        inside = np.count_nonzero(self.rgb * self.occupancy[:, :, None])
        if inside != np.count_nonzero(self.rgb):
            raise ValueError("rgb must be zero outside occupancy")
        # cached connected-component labelling of the occupancy raster
        self._labels: np.ndarray | None = None

    @property
    def canvas_size(self) -> tuple[int, int]:
        h, w = self.occupancy.shape
        return w, h

    def copy(self) -> "AugmentedMask":
        dup = AugmentedMask(
            rgb=self.rgb.copy(),
            occupancy=self.occupancy.copy(),
            regions=list(self.regions),
            family=self.family,
        )
        dup._labels = self._labels
        return dup


_CONNECTIVITY = np.ones((3, 3), dtype=int)  # 8-connected components


def _boxes_from_labels(labels: np.ndarray) -> list[tuple[int, int, int, int]]:
    boxes = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append((xs.start, ys.start, xs.stop, ys.stop))
    return boxes


def component_boxes(occupancy: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Tight half-open bounding boxes of 8-connected components, in label order."""
    labels, _ = ndimage.label(occupancy, structure=_CONNECTIVITY)
    return _boxes_from_labels(labels)


def _mask_labels(mask: AugmentedMask) -> tuple[np.ndarray, int]:
    """Component labels of the mask's occupancy, cached on the mask."""
    if mask._labels is None:
        mask._labels = ndimage.label(mask.occupancy, structure=_CONNECTIVITY)[0]
    return mask._labels, int(mask._labels.max())


def component_labels(occupancy: np.ndarray) -> tuple[np.ndarray, int]:
    return ndimage.label(occupancy, structure=_CONNECTIVITY)


def gen_binary_mask(spec: MaskSpec) -> AugmentedMask:
    """Union-rasterize the spec's shapes; active pixels are white."""
    if spec.family is not MaskFamily.BINARY:
        raise ValueError("spec.family must be Binary")
    occ = np.zeros((spec.canvas_h, spec.canvas_w), dtype=bool)
    for shape in spec.regions:
        occ |= shape.rasterize(spec.canvas_w, spec.canvas_h)
    rgb = np.zeros((spec.canvas_h, spec.canvas_w, 3), dtype=np.uint8)
    rgb[occ] = 255
    labels, _ = ndimage.label(occ, structure=_CONNECTIVITY)
    mask = AugmentedMask(
        rgb=rgb, occupancy=occ, regions=_boxes_from_labels(labels), family=MaskFamily.BINARY
    )
    mask._labels = labels
    return mask


def colorize(
    mask: AugmentedMask,
    palette: FirePalette,
    seed: int,
    jitter: bool = True,
) -> AugmentedMask:
    """Fill each connected region with one sampled palette color.

    With jitter enabled, per-pixel brightness varies uniformly by +-10%
    (clamped), which keeps the channel-wise mean on the sampled color.
    """
    if mask.family is not MaskFamily.BINARY:
        raise ValueError("colorize requires a Binary mask")
    rng = np.random.default_rng(seed)
    labels, n = _mask_labels(mask)
    out = np.zeros_like(mask.rgb)
    for region in range(1, n + 1):
        sel = labels == region
        color = palette.colors[rng.integers(0, len(palette.colors))]
        if jitter:
            gain = rng.uniform(0.9, 1.1, size=(int(sel.sum()), 1))
            out[sel] = np.clip(np.rint(color * gain), 0, 255).astype(np.uint8)
        else:
            out[sel] = color
    result = AugmentedMask(
        rgb=out,
        occupancy=mask.occupancy.copy(),
        regions=list(mask.regions),
        family=MaskFamily.COLORED,
    )
    result._labels = labels
    return result


def add_gaussian(mask: AugmentedMask, sigma: float, seed: int) -> AugmentedMask:
    """Add zero-mean Gaussian noise (std sigma on the normalized [0,1] channel
    scale) to active pixels, clamped to the valid range."""
    if mask.family is not MaskFamily.COLORED:
        raise ValueError("add_gaussian requires a Colored mask")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = mask.copy()
    out.family = MaskFamily.NOISE
    if sigma == 0:
        return out
    rng = np.random.default_rng(seed)
    sel = mask.occupancy
    noise = rng.normal(0.0, sigma * 255.0, size=(int(sel.sum()), 3))
    vals = mask.rgb[sel].astype(np.float64) + noise
    out.rgb[sel] = np.clip(np.rint(vals), 0, 255).astype(np.uint8)
    return out


def _tone_and_warp_at(u: np.ndarray, v: np.ndarray, w: int, params: PerlinParams):
    """Unwarped and domain-warped fBm at explicit normalized points.

    Pointwise-identical to sampling ``render_field(w, h, params,
    warped=False/True)`` at the same coordinates, but only the requested
    points are computed, which matters when many small regions are processed.
    """
    from .noisefield import fbm

    amp = params.warp_amplitude / w
    if amp == 0:
        tone = fbm(u, v, params)
        return tone, tone
    (o1x, o1y), (o2x, o2y) = params.warp_offsets
    d1 = fbm(u + o1x, v + o1y, params)
    d2 = fbm(u + o2x, v + o2y, params)
    tone = fbm(u, v, params)
    warp = fbm(u + amp * d1, v + amp * d2, params)
    return tone, warp


def apply_perlin(
    mask: AugmentedMask,
    params: PerlinParams,
    cut: float = -0.15,
) -> AugmentedMask:
    """Fuse a Perlin field into a colored mask.

    Per region: modulates active-pixel intensity by (1 + fbm)/2 rendered over
    the region's bounding box, then erodes occupancy where the domain-warped
    field falls below ``cut``.  The cut is relaxed in steps of 0.1 whenever
    erosion would empty a region, so occupancy never becomes empty.
    """
    if mask.family is not MaskFamily.COLORED:
        raise ValueError("apply_perlin requires a Colored mask")
    labels, n = _mask_labels(mask)
    occ = np.zeros_like(mask.occupancy)
    out_rgb = np.zeros_like(mask.rgb)
    for region, box in zip(range(1, n + 1), ndimage.find_objects(labels)):
        ys, xs = box
        x0, y0, x1, y1 = xs.start, ys.start, xs.stop, ys.stop
        w = x1 - x0
        region_params = replace(params, seed=splitmix64(params.seed ^ (region * 0x9E3779B97F4A7C15)))
        sl = (slice(y0, y1), slice(x0, x1))
        sel = labels[sl] == region
        # normalized in-region coordinates of the active pixels, row-major
        ry, rx = np.nonzero(sel)
        u = (rx + 0.5) / w
        v = (ry + 0.5) / w
        tone, warp = _tone_and_warp_at(u, v, w, region_params)
        vals = mask.rgb[sl][sel] * ((1.0 + tone) / 2.0)[:, None]
        level = cut
        keep = warp >= level
        while not keep.any() and level > -1.0:
            level -= 0.1
            keep = warp >= level
        if not keep.any():
            keep = np.ones_like(keep)
        block = np.zeros(sel.shape, dtype=bool)
        block[ry[keep], rx[keep]] = True
        occ[sl] |= block
        kept_vals = np.clip(np.rint(vals[keep]), 0, 255).astype(np.uint8)
        out_rgb[sl][block] = kept_vals
    out_rgb[~occ] = 0
    out_labels, _ = ndimage.label(occ, structure=_CONNECTIVITY)
    result = AugmentedMask(
        rgb=out_rgb,
        occupancy=occ,
        regions=_boxes_from_labels(out_labels),
        family=MaskFamily.PERLIN,
    )
    result._labels = out_labels
    return result


@dataclass(frozen=True)
class MaskConstraints:
    min_regions: int = 1
    max_regions: int = 3
    min_size_frac: float = 0.05
    max_size_frac: float = 0.25
    kinds: tuple[ShapeKind, ...] = (ShapeKind.RECTANGLE, ShapeKind.CIRCLE, ShapeKind.ELLIPSE)


def default_perlin_params(seed: int, region_width: float) -> PerlinParams:
    """Flame-scale defaults: 4 fBm cells across the region, warp 1/4 its width."""
    return PerlinParams(
        seed=seed,
        frequency=4.0,
        octaves=4,
        lacunarity=2.0,
        persistence=0.5,
        warp_amplitude=0.25 * region_width,
    )


def random_mask_spec(
    canvas_w: int,
    canvas_h: int,
    family: MaskFamily,
    seed: int,
    constraints: MaskConstraints = MaskConstraints(),
    sigma: float = 0.0,
) -> MaskSpec:
    """Sample a valid MaskSpec uniformly within the constraints."""
    c = constraints
    max_side = c.max_size_frac * canvas_w
    min_dim = min(canvas_w, canvas_h)
    if max_side > min_dim or max_side * max_side < MIN_REGION_AREA:
        raise ValueError("constraints unsatisfiable for this canvas")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(c.min_regions, c.max_regions + 1))
    shapes = []
    for _ in range(n):
        kind = c.kinds[int(rng.integers(0, len(c.kinds)))]
        w, h = rng.uniform(c.min_size_frac, c.max_size_frac, size=2) * canvas_w
        if kind is ShapeKind.CIRCLE:
            w = h = (w + h) / 2
        rotation = 0.0 if kind is ShapeKind.CIRCLE else float(rng.uniform(0, np.pi))
        # enforce the area floor; may exceed max_size_frac but never half the canvas
        for _ in range(8):
            area = w * h if kind is ShapeKind.RECTANGLE else np.pi * w * h / 4
            if area >= MIN_REGION_AREA:
                break
            scale = np.sqrt(MIN_REGION_AREA / area) * 1.001
            w = min(w * scale, min_dim / 2)
            h = min(h * scale, min_dim / 2)
        probe = ShapeSpec(kind=kind, center=(0.0, 0.0), extents=(w, h), rotation=rotation)
        bx0, by0, bx1, by1 = probe.bounding_box()
        hx, hy = bx1, by1  # symmetric half-extents around the center
        if 2 * hx > canvas_w or 2 * hy > canvas_h:
            shrink = min(canvas_w / (2 * hx), canvas_h / (2 * hy)) * 0.999
            w, h = w * shrink, h * shrink
            probe = ShapeSpec(kind=kind, center=(0.0, 0.0), extents=(w, h), rotation=rotation)
            hx, hy = probe.bounding_box()[2:]
        cx = float(rng.uniform(hx, canvas_w - hx))
        cy = float(rng.uniform(hy, canvas_h - hy))
        shapes.append(ShapeSpec(kind=kind, center=(cx, cy), extents=(w, h), rotation=rotation))
    widest = max(s.bounding_box()[2] - s.bounding_box()[0] for s in shapes)
    return MaskSpec(
        canvas_w=canvas_w,
        canvas_h=canvas_h,
        regions=tuple(shapes),
        family=family,
        rng_seed=seed,
        sigma=sigma if family is MaskFamily.NOISE else 0.0,
        perlin=default_perlin_params(splitmix64(seed), widest)
        if family is MaskFamily.PERLIN
        else None,
        max_regions=max(c.max_regions, 3),
    )


def yolo_row_to_pixel_box(
    cx: float, cy: float, w: float, h: float, width: int, height: int
) -> tuple[int, int, int, int]:
    """Decode a normalized YOLO box to half-open pixel bounds, clamped to the image."""
    x0 = int(np.floor((cx - w / 2) * width))
    y0 = int(np.floor((cy - h / 2) * height))
    x1 = int(np.ceil((cx + w / 2) * width))
    y1 = int(np.ceil((cy + h / 2) * height))
    return max(0, x0), max(0, y0), min(width, x1), min(height, y1)


def parse_yolo_file(path: Path) -> list[tuple[int, float, float, float, float]]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise AnnotationFormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise AnnotationFormatError(f"{path}:{lineno}: {exc}") from exc
        if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
            raise AnnotationFormatError(f"{path}:{lineno}: coordinates outside [0, 1]")
        rows.append((cls, cx, cy, w, h))
    return rows


def build_palette(
    annotation_root: str | Path,
    max_pixels: int = 100_000,
    fire_class: int = 0,
    seed: int = 0,
) -> FirePalette:
    """Sample RGB pixels inside fire-class YOLO boxes across a directory.

    Images are visited lexicographically by stem; when more than ``max_pixels``
    candidates exist, a seeded uniform subsample keeps exactly ``max_pixels``.
    """
    root = Path(annotation_root)
    if not root.is_dir():
        raise FileNotFoundError(f"annotation root {root} is not a directory")
    images = sorted(
        (p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )
    chunks = []
    source_count = 0
    for img_path in images:
        ann_path = img_path.with_suffix(".txt")
        if not ann_path.exists():
            continue
        rows = parse_yolo_file(ann_path)
        fire_rows = [r for r in rows if r[0] == fire_class]
        if not fire_rows:
            continue
        arr = np.asarray(Image.open(img_path).convert("RGB"))
        height, width = arr.shape[:2]
        for _, cx, cy, w, h in fire_rows:
            x0, y0, x1, y1 = yolo_row_to_pixel_box(cx, cy, w, h, width, height)
            if x1 > x0 and y1 > y0:
                chunks.append(arr[y0:y1, x0:x1].reshape(-1, 3))
        source_count += 1
    if not chunks:
        raise PaletteError(f"no fire-class pixels found under {root}")
    pixels = np.concatenate(chunks)
    if len(pixels) > max_pixels:
        idx = np.random.default_rng(seed).choice(len(pixels), size=max_pixels, replace=False)
        pixels = pixels[np.sort(idx)]
    return FirePalette(colors=pixels, source_count=source_count)


# Fallback palette of fire tones; used when no reference imagery is configured.
DEFAULT_FIRE_COLORS = np.array(
    [
        (255, 90, 0),
        (255, 140, 0),
        (255, 170, 30),
        (240, 60, 10),
        (255, 200, 60),
        (220, 40, 0),
        (255, 110, 20),
        (250, 190, 90),
    ],
    dtype=np.uint8,
)


def default_palette() -> FirePalette:
    return FirePalette(colors=DEFAULT_FIRE_COLORS.copy(), source_count=0)
