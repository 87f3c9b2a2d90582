"""Synthetic catchments for desk-scale runs.

The DEM is multi-octave value noise; the mask carves one irregular no-data
region; pseudo ground-truth depth for a rainfall pattern is

    depth = (pattern total / reference total) * accumulation_proxy

where the accumulation proxy is a smoothed lowland/flow measure derived
from the DEM. Depth is therefore monotone in total rainfall at every pixel,
which is all the learning-sanity and pipeline tests rely on.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .exceptions import InvalidInput
from .patches import RainfallPattern
from .terrain import TerrainRaster, derive_channels

MIN_SIZE = 256

# rainfall scaling anchors: a pattern with REF_TOTAL mm/h-steps total produces
# PEAK_DEPTH_M at the wettest pixel
REF_TOTAL = 120.0
PEAK_DEPTH_M = 2.0


def _value_noise(rng: np.random.Generator, size: int, octaves: int = 5) -> np.ndarray:
    """Sum of bilinearly-upsampled random grids with halving amplitude."""
    out = np.zeros((size, size), dtype=np.float64)
    amplitude = 1.0
    for octave in range(octaves):
        n = 4 * 2**octave + 1
        coarse = rng.standard_normal((n, n))
        xs = np.linspace(0.0, n - 1.0, size)
        i = np.clip(xs.astype(int), 0, n - 2)
        f = xs - i
        rows = (
            coarse[i][:, i] * (1 - f)[:, None] * (1 - f)[None, :]
            + coarse[i + 1][:, i] * f[:, None] * (1 - f)[None, :]
            + coarse[i][:, i + 1] * (1 - f)[:, None] * f[None, :]
            + coarse[i + 1][:, i + 1] * f[:, None] * f[None, :]
        )
        out += amplitude * rows
        amplitude *= 0.5
    return out


def synth_rainfall_patterns(rng_seed: int, count: int = 18) -> list[RainfallPattern]:
    """Deterministic family of hyetographs with varied shapes and totals."""
    rng = np.random.default_rng([rng_seed, 17])
    t = np.arange(12)
    patterns = []
    for k in range(count):
        shape_kind = k % 4
        if shape_kind == 0:  # uniform
            shape = np.ones(12)
        elif shape_kind == 1:  # front-loaded
            shape = np.exp(-t / rng.uniform(2.0, 5.0))
        elif shape_kind == 2:  # back-loaded
            shape = np.exp(-(11 - t) / rng.uniform(2.0, 5.0))
        else:  # mid-peaked
            peak = rng.uniform(3.0, 8.0)
            shape = np.exp(-0.5 * ((t - peak) / rng.uniform(1.0, 3.0)) ** 2)
        shape = shape / shape.sum()
        total = rng.uniform(40.0, 200.0)
        values = (shape * total).astype(np.float32)
        patterns.append(RainfallPattern(id=f"p{k:02d}", values=values))
    return patterns


def synth_catchment(
    rng_seed: int,
    size: int,
    patterns: list[RainfallPattern] | None = None,
    cell_size: float = 10.0,
) -> tuple[TerrainRaster, dict[str, np.ndarray], list[RainfallPattern]]:
    """Generate a synthetic catchment and per-pattern pseudo-truth depths.

    Returns (terrain raster, {pattern id: depth grid [m]}, patterns).
    Bit-identical for identical arguments.
    """
    if size < MIN_SIZE:
        raise InvalidInput(f"catchment size must be >= {MIN_SIZE}, got {size}")
    if patterns is None:
        patterns = synth_rainfall_patterns(rng_seed)

    rng = np.random.default_rng([rng_seed, 1])
    relief = _value_noise(rng, size)
    relief = (relief - relief.min()) / (relief.max() - relief.min())
    dem = (80.0 * relief + 0.02 * np.arange(size)[:, None]).astype(np.float64)

    # irregular no-data region: low quantile of an independent smooth field
    blob = gaussian_filter(np.random.default_rng([rng_seed, 2]).standard_normal((size, size)), size / 16)
    mask = np.where(blob < np.quantile(blob, 0.08), -1.0, 1.0).astype(np.float32)

    raster = derive_channels(dem, mask, cell_size)

    # wetness proxy: valleys collect water, flats hold it
    low = 1.0 - relief
    slope = raster.data[2].astype(np.float64)
    flatness = 1.0 / (1.0 + 40.0 * slope)
    proxy = gaussian_filter(low**2 * (0.5 + 0.5 * flatness), 3.0)
    proxy = proxy / proxy.max()

    effective = mask > 0
    depths = {}
    for pattern in patterns:
        depth = (pattern.total / REF_TOTAL) * PEAK_DEPTH_M * proxy
        depth[~effective] = 0.0
        depths[pattern.id] = depth.astype(np.float32)
    return raster, depths, patterns
