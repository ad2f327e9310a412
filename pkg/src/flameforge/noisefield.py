"""Deterministic 2-D gradient noise: Perlin, fractal accumulation, domain warping.

All functions are pure and fully determined by their arguments.  The
permutation table is derived from the seed with an explicit splitmix64-driven
Fisher-Yates shuffle so results are reproducible across platforms.

Coordinate convention: ``perlin2(x, y, params)`` evaluates the lattice at
``(x * frequency, y * frequency)``.  ``frequency`` is therefore "cells per
unit of x"; rendering a raster maps pixel centers to ``(col+0.5)/width`` so a
frequency of 4 yields four noise cells across the image width.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15

# 4 axis gradients + 4 normalized diagonals; with unit gradients the raw
# noise amplitude is bounded by sqrt(2)/2, so the sqrt(2) rescale below
# fills [-1, 1] exactly.
_SQRT_HALF = np.sqrt(0.5)
_GRADS = np.array(
    [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (_SQRT_HALF, _SQRT_HALF),
        (-_SQRT_HALF, _SQRT_HALF),
        (_SQRT_HALF, -_SQRT_HALF),
        (-_SQRT_HALF, -_SQRT_HALF),
    ]
)
_GRADS_X = np.ascontiguousarray(_GRADS[:, 0])
_GRADS_Y = np.ascontiguousarray(_GRADS[:, 1])
_AMPLITUDE_FIX = np.sqrt(2.0)


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixing function (public-domain constants)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class PerlinParams:
    seed: int
    frequency: float = 4.0
    octaves: int = 4
    lacunarity: float = 2.0
    persistence: float = 0.5
    warp_amplitude: float = 0.0
    warp_offsets: tuple[tuple[float, float], tuple[float, float]] = (
        (17.31, 5.77),
        (-9.13, 23.41),
    )

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64):
            raise ValueError("seed must fit in 64 unsigned bits")
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        if self.octaves < 1:
            raise ValueError("octaves must be >= 1")
        if not self.lacunarity > 1:
            raise ValueError("lacunarity must be > 1")
        if not 0 < self.persistence <= 1:
            raise ValueError("persistence must be in (0, 1]")
        if self.warp_amplitude < 0:
            raise ValueError("warp_amplitude must be >= 0")


@dataclass
class ScalarField:
    width: int
    height: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(
            self.height, self.width
        )
        if not np.isfinite(self.values).all():
            raise ValueError("field values must be finite")


@lru_cache(maxsize=64)
def _perm_table(seed: int) -> np.ndarray:
    """256-entry permutation table shuffled by a splitmix64-driven Fisher-Yates."""
    perm = list(range(256))
    state = seed & _MASK64
    # splitmix64 inlined: this loop is hot when many distinct seeds are used
    for i in range(255, 0, -1):
        state = (state + _GOLDEN) & _MASK64
        state = ((state ^ (state >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        state = ((state ^ (state >> 27)) * 0x94D049BB133111EB) & _MASK64
        state = (state ^ (state >> 31)) & _MASK64
        j = state % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    table = np.array(perm + perm, dtype=np.int64)
    table.setflags(write=False)
    return table


def _perlin_core(sx: np.ndarray, sy: np.ndarray, perm: np.ndarray, off) -> np.ndarray:
    """Perlin noise at scaled lattice coordinates against a permutation table.

    ``perm`` may hold several 512-entry tables back to back; ``off`` is then a
    per-point base offset (a multiple of 512) selecting the table, which lets
    one vectorized pass evaluate points drawn from different octaves/seeds.
    """
    # in-place arithmetic below mirrors the straightforward expressions
    # operation for operation, so results are bit-identical while temporaries
    # are reused (this path is memory-bound on large rasters)
    xi = np.floor(sx).astype(np.int64)
    yi = np.floor(sy).astype(np.int64)
    xf = sx - xi
    yf = sy - yi
    xi &= 255
    yi &= 255

    def fade(t):
        # t*t*t * (t*(t*6 - 15) + 10)
        inner = t * 6
        inner -= 15
        inner *= t
        inner += 10
        out = t * t
        out *= t
        out *= inner
        return out

    u = fade(xf)
    v = fade(yf)

    # hash corners sharing the row lookups perm[xi] / perm[xi+1]
    if off is not None:
        xi += off
        yi += off
    pyi = perm[xi]
    xi += 1
    pyi1 = perm[xi]
    pyi += yi
    pyi1 += yi
    h00 = perm[pyi]
    h10 = perm[pyi1]
    pyi += 1
    pyi1 += 1
    h01 = perm[pyi]
    h11 = perm[pyi1]
    h00 &= 7
    h10 &= 7
    h01 &= 7
    h11 &= 7
    xf1 = xf - 1
    yf1 = yf - 1

    def dot(h, dx, dy):
        # _GRADS_X[h]*dx + _GRADS_Y[h]*dy
        out = _GRADS_X[h] * dx
        out += _GRADS_Y[h] * dy
        return out

    n00 = dot(h00, xf, yf)
    n10 = dot(h10, xf1, yf)
    n01 = dot(h01, xf, yf1)
    n11 = dot(h11, xf1, yf1)

    # n00 + u*(n10 - n00), lerped again along v, then amplitude-rescaled
    nx0 = n10 - n00
    nx0 *= u
    nx0 += n00
    nx1 = n11 - n01
    nx1 *= u
    nx1 += n01
    nx1 -= nx0
    nx1 *= v
    nx1 += nx0
    nx1 *= _AMPLITUDE_FIX
    return nx1


def _perlin_raw(sx: np.ndarray, sy: np.ndarray, seed: int) -> np.ndarray:
    """Single-octave Perlin noise at already-scaled lattice coordinates."""
    return _perlin_core(sx, sy, _perm_table(seed), None)


def perlin2(x, y, params: PerlinParams):
    """Single-octave Perlin noise in [-1, 1]; zero at scaled-integer lattice nodes."""
    sx = np.asarray(x, dtype=np.float64) * params.frequency
    sy = np.asarray(y, dtype=np.float64) * params.frequency
    out = _perlin_raw(sx, sy, params.seed)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def octave_seed(seed: int, i: int) -> int:
    """Per-octave seed: octave 0 keeps the base seed, later octaves are mixed."""
    if i == 0:
        return seed & _MASK64
    return splitmix64((seed ^ (i * _GOLDEN)) & _MASK64)


def fbm(x, y, params: PerlinParams):
    """Fractal accumulation of Perlin octaves, rescaled to stay in [-1, 1]."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    total = np.zeros(np.broadcast(xs, ys).shape)
    amp = 1.0
    freq_mul = 1.0
    norm = 0.0
    for i in range(params.octaves):
        sx = xs * freq_mul * params.frequency
        sy = ys * freq_mul * params.frequency
        total += amp * _perlin_raw(sx, sy, octave_seed(params.seed, i))
        norm += amp
        amp *= params.persistence
        freq_mul *= params.lacunarity
    total /= norm
    return float(total) if np.isscalar(x) or np.ndim(x) == 0 else total


def domain_warp(field_fn, x, y, params: PerlinParams):
    """Evaluate ``field_fn`` at coordinates displaced by two fBm sub-fields."""
    if params.warp_amplitude == 0:
        return field_fn(x, y)
    (o1x, o1y), (o2x, o2y) = params.warp_offsets
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    wx = xs + params.warp_amplitude * fbm(xs + o1x, ys + o1y, params)
    wy = ys + params.warp_amplitude * fbm(xs + o2x, ys + o2y, params)
    return field_fn(wx, wy)


def render_field(
    width: int, height: int, params: PerlinParams, warped: bool = False
) -> ScalarField:
    """Rasterize fBm (optionally domain-warped) over a pixel grid.

    Pixel centers map to normalized coordinates ``(col+0.5)/width``; when
    warping, ``warp_amplitude`` (pixels) is converted to the same normalized
    units so the displacement is warp_amplitude pixels on the raster.
    """
    if width < 1 or height < 1:
        raise ValueError("raster must have positive area")
    cols = (np.arange(width) + 0.5) / width
    rows = (np.arange(height) + 0.5) / width
    u, v = np.meshgrid(cols, rows)
    if warped and params.warp_amplitude > 0:
        norm_params = replace(params, warp_amplitude=params.warp_amplitude / width)
        values = domain_warp(lambda a, b: fbm(a, b, norm_params), u, v, norm_params)
    else:
        values = fbm(u, v, params)
    return ScalarField(width=width, height=height, values=values)
