"""Terrain rasters and channel derivation from a bare DEM.

A terrain raster carries six channels: dem [m], mask {-1,1}, slope
[rise/run], cos(aspect), sin(aspect), curvature [1/m]. Slope and aspect
come from Horn's 3x3 finite-difference stencil, curvature from the
Zevenbergen-Thorne quadratic surface fit. Any pixel whose 3x3 window
touches a no-data cell or the grid border gets zeroed derived channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInput

CHANNEL_NAMES = ("dem", "mask", "slope", "cos_aspect", "sin_aspect", "curvature")

# gradient magnitudes below this are treated as flat (aspect undefined)
FLAT_TOL = 1e-12


@dataclass
class TerrainRaster:
    """6-channel terrain stack, shape (6, H, W), float32."""

    data: np.ndarray
    cell_size: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[0] != len(CHANNEL_NAMES):
            raise InvalidInput(f"terrain raster must be (6, H, W), got {self.data.shape}")
        if self.cell_size <= 0:
            raise InvalidInput(f"cell_size must be positive, got {self.cell_size}")
        mask = self.data[1]
        if not np.all(np.isin(mask, (-1.0, 1.0))):
            raise InvalidInput("mask channel may only contain -1 and 1")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dem(self) -> np.ndarray:
        return self.data[0]

    @property
    def mask(self) -> np.ndarray:
        return self.data[1]

    @property
    def effective(self) -> np.ndarray:
        """Boolean grid of effective (mask == 1) pixels."""
        return self.data[1] > 0


def derive_channels(dem: np.ndarray, mask: np.ndarray, cell_size: float) -> TerrainRaster:
    """Build the 6-channel terrain raster from a DEM and its validity mask.

    Args:
        dem: (H, W) elevation grid in metres.
        mask: (H, W) grid of -1 (no-data) / 1 (effective).
        cell_size: grid spacing in metres, > 0.

    Returns:
        TerrainRaster with channels (dem, mask, slope, cos_aspect,
        sin_aspect, curvature). Derived channels are 0 wherever the 3x3
        stencil window leaves the grid or touches a no-data cell.
    """
    dem = np.asarray(dem, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float32)
    if dem.shape != mask.shape:
        raise InvalidInput(f"dem {dem.shape} and mask {mask.shape} shapes differ")
    if dem.ndim != 2:
        raise InvalidInput(f"dem must be 2-D, got {dem.ndim}-D")
    if cell_size <= 0:
        raise InvalidInput(f"cell_size must be positive, got {cell_size}")
    if not np.all(np.isin(mask, (-1.0, 1.0))):
        raise InvalidInput("mask may only contain -1 and 1")

    height, width = dem.shape
    slope = np.zeros_like(dem)
    cos_aspect = np.zeros_like(dem)
    sin_aspect = np.zeros_like(dem)
    curvature = np.zeros_like(dem)

    if height >= 3 and width >= 3:
        # 3x3 neighbourhood views of the interior, z[dr][dc]
        z = {
            (dr, dc): dem[1 + dr : height - 1 + dr, 1 + dc : width - 1 + dc]
            for dr in (-1, 0, 1)
            for dc in (-1, 0, 1)
        }
        cs = float(cell_size)

        # Horn 1981
        p = (
            (z[-1, 1] + 2.0 * z[0, 1] + z[1, 1])
            - (z[-1, -1] + 2.0 * z[0, -1] + z[1, -1])
        ) / (8.0 * cs)
        q = (
            (z[1, -1] + 2.0 * z[1, 0] + z[1, 1])
            - (z[-1, -1] + 2.0 * z[-1, 0] + z[-1, 1])
        ) / (8.0 * cs)
        grad = np.sqrt(p * p + q * q)
        steep = grad > FLAT_TOL
        inv = np.where(steep, 1.0 / np.where(steep, grad, 1.0), 0.0)

        # Zevenbergen-Thorne 1987 quadratic coefficients
        d_coef = (0.5 * (z[0, -1] + z[0, 1]) - z[0, 0]) / cs**2
        e_coef = (0.5 * (z[-1, 0] + z[1, 0]) - z[0, 0]) / cs**2
        f_coef = (-z[-1, -1] + z[-1, 1] + z[1, -1] - z[1, 1]) / (4.0 * cs**2)
        g_coef = (-z[0, -1] + z[0, 1]) / (2.0 * cs)
        h_coef = (z[-1, 0] - z[1, 0]) / (2.0 * cs)
        g2h2 = g_coef**2 + h_coef**2
        nonflat = g2h2 > FLAT_TOL
        profile = np.where(
            nonflat,
            -2.0
            * (d_coef * g_coef**2 + e_coef * h_coef**2 + f_coef * g_coef * h_coef)
            / np.where(nonflat, g2h2, 1.0),
            0.0,
        )

        # a pixel is derivable only if its whole 3x3 window is effective
        eff = mask > 0
        window_ok = np.ones((height - 2, width - 2), dtype=bool)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                window_ok &= eff[1 + dr : height - 1 + dr, 1 + dc : width - 1 + dc]

        slope[1:-1, 1:-1] = np.where(window_ok, grad, 0.0)
        cos_aspect[1:-1, 1:-1] = np.where(window_ok, -p * inv, 0.0)
        sin_aspect[1:-1, 1:-1] = np.where(window_ok, -q * inv, 0.0)
        curvature[1:-1, 1:-1] = np.where(window_ok, profile, 0.0)

    channels = np.stack(
        [
            dem.astype(np.float32),
            mask,
            slope.astype(np.float32),
            cos_aspect.astype(np.float32),
            sin_aspect.astype(np.float32),
            curvature.astype(np.float32),
        ]
    )
    return TerrainRaster(data=channels, cell_size=float(cell_size))
