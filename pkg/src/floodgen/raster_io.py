"""Raster and rainfall-table file formats.

Raster files use a minimal binary container ("FLR1"):

    24-byte header: magic b"FLR1", u32 width, u32 height, u32 channels,
    f32 cell_size, u32 reserved (all little-endian), followed by a
    channels * height * width float32 payload in row-major order.

Rainfall tables are headerless CSV, one row per pattern:
``id,v1,...,v12``.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError, InvalidInput

MAGIC = b"FLR1"
HEADER = struct.Struct("<4sIIIfI")

TERRAIN_CHANNELS = 6


def write_raster(path, data: np.ndarray, cell_size: float) -> None:
    """Write a (C, H, W) float32 array to an FLR1 file."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise InvalidInput(f"raster payload must be (C, H, W), got shape {data.shape}")
    if cell_size <= 0:
        raise InvalidInput(f"cell_size must be positive, got {cell_size}")
    channels, height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, width, height, channels, float(cell_size), 0))
        fh.write(np.ascontiguousarray(data).astype("<f4").tobytes())


def read_raster(path) -> tuple[np.ndarray, float]:
    """Read an FLR1 file, returning ((C, H, W) float32, cell_size)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the 24-byte header")
    magic, width, height, channels, cell_size, _reserved = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = channels * height * width * 4
    payload = raw[HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, height, width)
    return data.astype(np.float32), float(cell_size)


def save_raster(raster, path) -> None:
    """Write a TerrainRaster to disk (see :mod:`floodgen.terrain`)."""
    write_raster(path, raster.data, raster.cell_size)


def load_raster(path):
    """Read a 6-channel terrain raster; FormatError on any other channel count."""
    from .terrain import TerrainRaster

    data, cell_size = read_raster(path)
    if data.shape[0] != TERRAIN_CHANNELS:
        raise FormatError(
            f"{path}: terrain raster must have {TERRAIN_CHANNELS} channels, "
            f"found {data.shape[0]}"
        )
    return TerrainRaster(data=data, cell_size=cell_size)


def write_depth_grid(path, depth: np.ndarray, cell_size: float) -> None:
    write_raster(path, np.asarray(depth, dtype=np.float32)[None], cell_size)


def read_depth_grid(path) -> tuple[np.ndarray, float]:
    data, cell_size = read_raster(path)
    if data.shape[0] != 1:
        raise FormatError(f"{path}: depth grid must have 1 channel, found {data.shape[0]}")
    return data[0], cell_size


def write_rainfall_csv(patterns, path) -> None:
    """One row per pattern: id followed by its 12 intensities."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for pattern in patterns:
            writer.writerow([pattern.id] + [repr(float(v)) for v in pattern.values])


def read_rainfall_csv(path):
    from .patches import RainfallPattern

    patterns = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 13:
                raise FormatError(
                    f"{path}:{lineno}: expected id plus 12 intensities, got {len(row)} fields"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric intensity") from exc
            patterns.append(RainfallPattern(id=row[0], values=np.array(values, dtype=np.float32)))
    return patterns
