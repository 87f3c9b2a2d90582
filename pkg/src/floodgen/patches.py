"""Patch-level sample types, random patch extraction, and map stitching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInput
from .terrain import TerrainRaster

PATCH_SIZE = 256
RAINFALL_STEPS = 12


def _as_float(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    if data.dtype not in (np.float32, np.float64):
        data = data.astype(np.float32)
    return data


@dataclass
class TerrainPatch:
    """(6, S, S) crop of a terrain raster plus its source offset."""

    data: np.ndarray
    origin_row: int = 0
    origin_col: int = 0

    def __post_init__(self):
        self.data = _as_float(self.data)
        if self.data.ndim != 3 or self.data.shape[0] != 6 or self.data.shape[1] != self.data.shape[2]:
            raise InvalidInput(f"terrain patch must be (6, S, S), got {self.data.shape}")

    @property
    def size(self) -> int:
        return self.data.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.data[1]


@dataclass
class DepthPatch:
    """(1, S, S) water-depth crop, metres, co-registered with a TerrainPatch."""

    data: np.ndarray
    origin_row: int = 0
    origin_col: int = 0

    def __post_init__(self):
        self.data = _as_float(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3 or self.data.shape[0] != 1 or self.data.shape[1] != self.data.shape[2]:
            raise InvalidInput(f"depth patch must be (1, S, S), got {self.data.shape}")

    @property
    def size(self) -> int:
        return self.data.shape[1]


@dataclass
class RainfallPattern:
    """One-hour hyetograph: 12 five-minute intensities."""

    id: str
    values: np.ndarray = field(default_factory=lambda: np.zeros(RAINFALL_STEPS))

    def __post_init__(self):
        self.values = _as_float(self.values).reshape(-1)
        if self.values.shape != (RAINFALL_STEPS,):
            raise InvalidInput(
                f"rainfall pattern needs exactly {RAINFALL_STEPS} values, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidInput(f"rainfall intensities must be finite and >= 0 ({self.id})")

    @property
    def total(self) -> float:
        return float(self.values.sum())


def extract_patches(
    raster: TerrainRaster,
    depth: np.ndarray,
    count: int,
    rng_seed: int,
    patch_size: int = PATCH_SIZE,
) -> list[tuple[TerrainPatch, DepthPatch]]:
    """Cut `count` random co-registered (terrain, depth) patch pairs.

    Offsets are uniform over all valid positions, sampled with
    replacement; the sequence is a pure function of `rng_seed`.
    """
    depth = np.asarray(depth, dtype=np.float32)
    if depth.shape != (raster.height, raster.width):
        raise InvalidInput(
            f"depth grid {depth.shape} is not co-registered with raster "
            f"({raster.height}, {raster.width})"
        )
    if raster.height < patch_size or raster.width < patch_size:
        raise InvalidInput(
            f"raster {raster.height}x{raster.width} is smaller than a "
            f"{patch_size}x{patch_size} patch"
        )
    if count < 0:
        raise InvalidInput(f"count must be >= 0, got {count}")

    rng = np.random.default_rng(rng_seed)
    rows = rng.integers(0, raster.height - patch_size + 1, size=count)
    cols = rng.integers(0, raster.width - patch_size + 1, size=count)
    pairs = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        pairs.append(
            (
                TerrainPatch(raster.data[:, r : r + patch_size, c : c + patch_size].copy(), r, c),
                DepthPatch(depth[None, r : r + patch_size, c : c + patch_size].copy(), r, c),
            )
        )
    return pairs


def stitch_patches(patches: list[DepthPatch], canvas_hw: tuple[int, int]) -> np.ndarray:
    """Mosaic depth patches onto an (H, W) canvas.

    Overlaps average; pixels no patch covers come back NaN.
    """
    height, width = canvas_hw
    total = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    for patch in patches:
        r, c, s = patch.origin_row, patch.origin_col, patch.size
        if r < 0 or c < 0 or r + s > height or c + s > width:
            raise InvalidInput(
                f"patch at ({r}, {c}) size {s} falls outside canvas {canvas_hw}"
            )
        total[r : r + s, c : c + s] += patch.data[0]
        count[r : r + s, c : c + s] += 1
    covered = count > 0
    out = np.full((height, width), np.nan, dtype=np.float64)
    out[covered] = total[covered] / count[covered]
    return out.astype(np.float32)


def tile_offsets(height: int, width: int, patch_size: int = PATCH_SIZE) -> list[tuple[int, int]]:
    """Deterministic inference tiling: a regular grid with the last row and
    column pulled back flush to the border when the size does not divide."""
    if height < patch_size or width < patch_size:
        raise InvalidInput(
            f"grid {height}x{width} is smaller than patch size {patch_size}"
        )

    def axis(n: int) -> list[int]:
        starts = list(range(0, n - patch_size + 1, patch_size))
        if starts[-1] != n - patch_size:
            starts.append(n - patch_size)
        return starts

    return [(r, c) for r in axis(height) for c in axis(width)]
