"""Attention heatmaps and depth/error renderings.

Images are written pixel-for-pixel (one image pixel per grid cell) with
fixed colormaps: "jet" for attention, "viridis" for depth, "RdBu_r" for
signed error. No-data pixels render neutral gray.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from matplotlib.image import imsave

from .exceptions import InvalidInput
from .manifest import NormConstants, normalize_depth, normalize_rainfall, normalize_terrain
from .losses import reconstruction_loss
from .patches import DepthPatch, RainfallPattern, TerrainPatch

ATTENTION_CMAP = "jet"
DEPTH_CMAP = "viridis"
ERROR_CMAP = "RdBu_r"
NODATA_GRAY = (0.5, 0.5, 0.5, 1.0)


def _prep_inputs(tpatch: TerrainPatch, pattern: RainfallPattern, norm: NormConstants):
    terrain = torch.from_numpy(
        normalize_terrain(tpatch.data, norm).astype(np.float32)
    ).unsqueeze(0)
    rain = torch.from_numpy(
        normalize_rainfall(pattern.values, norm).astype(np.float32)
    ).unsqueeze(0)
    return terrain, rain


def _upsample(maps: torch.Tensor, size: int) -> np.ndarray:
    out = F.interpolate(maps, size=(size, size), mode="bilinear", align_corners=False)
    return out[0, 0].detach().numpy()


def attention_maps(model, tpatch, pattern, norm) -> list[np.ndarray]:
    """Raw attention weights per level, bilinearly upsampled to patch size."""
    if not model.config.use_hta:
        raise InvalidInput("model was built without attention layers")
    terrain, rain = _prep_inputs(tpatch, pattern, norm)
    model.eval()
    with torch.no_grad():
        _, internals = model(terrain, rain, return_internals=True)
    return [_upsample(a, model.config.patch_size) for a in internals["attention"]]


def grad_cam_maps(model, tpatch, pattern, norm, truth: DepthPatch | None = None) -> list[np.ndarray]:
    """Grad-CAM of the shortcut features per level, in [0, 1].

    The backward target is the masked reconstruction loss when a truth
    patch is supplied, otherwise the mean predicted depth.
    """
    terrain, rain = _prep_inputs(tpatch, pattern, norm)
    model.eval()
    out, internals = model(terrain, rain, return_internals=True)
    skips = internals["skips"]
    for skip in skips:
        skip.retain_grad()
    if truth is not None:
        target = torch.from_numpy(
            normalize_depth(truth.data, norm).astype(np.float32)
        ).unsqueeze(0)
        mask = terrain[:, 1:2]
        scalar = reconstruction_loss(out, target, mask)
    else:
        scalar = out.mean()
    model.zero_grad()
    scalar.backward()

    cams = []
    for skip in skips:
        weights = skip.grad.mean(dim=(2, 3), keepdim=True)
        cam = torch.relu((weights * skip).sum(dim=1, keepdim=True))
        cam = _upsample(cam, model.config.patch_size)
        peak = cam.max()
        if peak > 0:
            cam = cam / peak
        cams.append(cam)
    model.zero_grad()
    return cams


def save_heatmap(data: np.ndarray, path, cmap: str = ATTENTION_CMAP,
                 vmin: float = 0.0, vmax: float = 1.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    imsave(path, np.asarray(data), cmap=cmap, vmin=vmin, vmax=vmax)
    return path


def visualize_attention(model, tpatch, pattern, norm, out_dir,
                        mode: str = "raw", truth: DepthPatch | None = None) -> list[Path]:
    """Write one heatmap image per attention level; returns the paths."""
    if mode == "raw":
        maps = attention_maps(model, tpatch, pattern, norm)
    elif mode == "grad_cam":
        maps = grad_cam_maps(model, tpatch, pattern, norm, truth)
    else:
        raise InvalidInput(f"mode must be 'raw' or 'grad_cam', got {mode!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for level, data in enumerate(maps, start=1):
        paths.append(save_heatmap(data, out_dir / f"attn_layer{level}_{mode}.png"))
    return paths


def _colorize(values: np.ndarray, cmap: str, lo: float, hi: float,
              effective: np.ndarray) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip((np.asarray(values, np.float64) - lo) / span, 0.0, 1.0)
    rgba = matplotlib.colormaps[cmap](scaled)
    rgba[~effective] = NODATA_GRAY
    return rgba


def error_map(pred: np.ndarray, truth: np.ndarray, mask, out_prefix) -> list[Path]:
    """Write the truth / prediction / signed-error triptych for one pattern."""
    pred = np.asarray(pred, np.float64)
    truth = np.asarray(truth, np.float64)
    if pred.shape != truth.shape:
        raise InvalidInput(f"grid shapes differ: {pred.shape} vs {truth.shape}")
    effective = np.ones(pred.shape, bool) if mask is None else np.asarray(mask) > 0

    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)

    depth_hi = float(max(truth[effective].max() if effective.any() else 0.0,
                         pred[effective].max() if effective.any() else 0.0, 1e-6))
    error = pred - truth
    err_hi = float(max(np.abs(error[effective]).max() if effective.any() else 0.0, 1e-6))

    paths = []
    for suffix, rgba in (
        ("truth", _colorize(truth, DEPTH_CMAP, 0.0, depth_hi, effective)),
        ("pred", _colorize(pred, DEPTH_CMAP, 0.0, depth_hi, effective)),
        ("error", _colorize(error, ERROR_CMAP, -err_hi, err_hi, effective)),
    ):
        path = out_prefix.parent / f"{out_prefix.name}_{suffix}.png"
        imsave(path, rgba)
        paths.append(path)
    return paths
