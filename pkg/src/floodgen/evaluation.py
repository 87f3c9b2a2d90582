"""Metrics over stitched full-map predictions and the evaluation driver.

All four metrics are computed over effective (mask == 1) pixels of the
assembled full-resolution map, not per patch. MAE is reported in
millimetres; CSI and the flooded-area ratio binarize at a depth threshold
(0.05 m by default).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .exceptions import ConfigError, InvalidInput
from .manifest import (
    DatasetManifest,
    load_catchment_data,
    normalize_rainfall,
    normalize_terrain,
)
from .patches import DepthPatch, RainfallPattern, TerrainPatch, stitch_patches, tile_offsets
from .terrain import TerrainRaster

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_M = 0.05


def _effective(pred, truth, mask):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise InvalidInput(f"grid shapes differ: {pred.shape} vs {truth.shape}")
    if mask is None:
        keep = np.ones(pred.shape, dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.shape != pred.shape:
            raise InvalidInput(f"mask shape {mask.shape} does not match grids {pred.shape}")
        keep = mask > 0
    return pred[keep], truth[keep]


def mae(pred, truth, mask=None) -> float:
    """Mean absolute error over effective pixels, in millimetres."""
    p, t = _effective(pred, truth, mask)
    if p.size == 0:
        raise InvalidInput("no effective pixels")
    return float(np.mean(np.abs(p - t)) * 1000.0)


def r2(pred, truth, mask=None) -> float:
    """1 - SSE / SST over effective pixels."""
    p, t = _effective(pred, truth, mask)
    if p.size == 0:
        raise InvalidInput("no effective pixels")
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        raise InvalidInput("truth has zero variance over effective pixels")
    sse = float(np.sum((p - t) ** 2))
    return 1.0 - sse / sst


def csi(pred, truth, mask=None, threshold_m: float = DEFAULT_THRESHOLD_M) -> float:
    """Critical success index TP/(TP+FP+FN) on flood/no-flood at the threshold.

    Defined as 1.0 when neither map floods anywhere (vacuous agreement).
    """
    p, t = _effective(pred, truth, mask)
    pf = p > threshold_m
    tf = t > threshold_m
    tp = int(np.sum(pf & tf))
    fp = int(np.sum(pf & ~tf))
    fn = int(np.sum(~pf & tf))
    denom = tp + fp + fn
    if denom == 0:
        return 1.0
    return tp / denom


def area_ratio(pred, truth, mask=None, threshold_m: float = DEFAULT_THRESHOLD_M) -> float:
    """Predicted flooded area over true flooded area (> 1 means over-prediction)."""
    p, t = _effective(pred, truth, mask)
    truth_area = int(np.sum(t > threshold_m))
    if truth_area == 0:
        raise InvalidInput("truth floods nowhere at this threshold")
    return int(np.sum(p > threshold_m)) / truth_area


@dataclass
class MetricsReport:
    mae_mm: float
    r2: float
    csi: float
    area_ratio: float
    n_pixels: int
    threshold_m: float = DEFAULT_THRESHOLD_M
    error_grid: np.ndarray | None = None

    def row(self) -> list[float]:
        return [self.mae_mm, self.r2, self.csi, self.area_ratio]


def compute_report(
    pred, truth, mask=None, threshold_m: float = DEFAULT_THRESHOLD_M, keep_error: bool = False
) -> MetricsReport:
    p, t = _effective(pred, truth, mask)
    error = None
    if keep_error:
        error = np.asarray(pred, np.float64) - np.asarray(truth, np.float64)
    return MetricsReport(
        mae_mm=mae(pred, truth, mask),
        r2=r2(pred, truth, mask),
        csi=csi(pred, truth, mask, threshold_m),
        area_ratio=area_ratio(pred, truth, mask, threshold_m),
        n_pixels=int(p.size),
        threshold_m=threshold_m,
        error_grid=error,
    )


def predict_full_map(
    predict_fn,
    raster: TerrainRaster,
    pattern: RainfallPattern,
    patch_size: int,
) -> np.ndarray:
    """Tile, predict patchwise, and stitch back to a full (H, W) depth grid.

    `predict_fn(terrain_patch, pattern) -> DepthPatch` sees raw (unnormalized)
    patches; the tiling is the deterministic border-aligned grid.
    """
    predictions: list[DepthPatch] = []
    for row, col in tile_offsets(raster.height, raster.width, patch_size):
        tpatch = TerrainPatch(
            raster.data[:, row : row + patch_size, col : col + patch_size], row, col
        )
        dpatch = predict_fn(tpatch, pattern)
        predictions.append(DepthPatch(dpatch.data, row, col))
    grid = stitch_patches(predictions, (raster.height, raster.width))
    return np.nan_to_num(grid, nan=0.0)


def model_predict_fn(model, norm):
    """Wrap a trained generator as a raw-patch predictor."""

    def predict(tpatch: TerrainPatch, pattern: RainfallPattern) -> DepthPatch:
        terrain = torch.from_numpy(
            normalize_terrain(tpatch.data, norm).astype(np.float32)
        ).unsqueeze(0)
        rain = torch.from_numpy(
            normalize_rainfall(pattern.values, norm).astype(np.float32)
        ).unsqueeze(0)
        with torch.no_grad():
            out = model(terrain, rain)
        depth = out[0].numpy() * norm.depth_max
        return DepthPatch(depth, tpatch.origin_row, tpatch.origin_col)

    return predict


def evaluate_patterns(
    predict_fn,
    raster: TerrainRaster,
    depth_grids: dict[str, np.ndarray],
    patterns: dict[str, RainfallPattern],
    pattern_ids: list[str],
    patch_size: int,
    threshold_m: float = DEFAULT_THRESHOLD_M,
    keep_error: bool = False,
) -> dict[str, MetricsReport]:
    """Per-pattern reports over stitched predictions for one catchment."""
    mask = raster.mask
    reports = {}
    for pid in pattern_ids:
        if pid not in depth_grids:
            raise ConfigError(f"no ground-truth depth grid for pattern {pid!r}")
        pred = predict_full_map(predict_fn, raster, patterns[pid], patch_size)
        reports[pid] = compute_report(
            pred, depth_grids[pid], mask, threshold_m, keep_error=keep_error
        )
    return reports


def aggregate_reports(reports: dict[str, MetricsReport]) -> MetricsReport:
    if not reports:
        raise InvalidInput("nothing to aggregate")
    rows = list(reports.values())
    return MetricsReport(
        mae_mm=float(np.mean([r.mae_mm for r in rows])),
        r2=float(np.mean([r.r2 for r in rows])),
        csi=float(np.mean([r.csi for r in rows])),
        area_ratio=float(np.mean([r.area_ratio for r in rows])),
        n_pixels=int(sum(r.n_pixels for r in rows)),
        threshold_m=rows[0].threshold_m,
    )


def evaluate_model(
    checkpoint,
    manifest: DatasetManifest,
    split: str = "test",
    out_dir=None,
    threshold_m: float = DEFAULT_THRESHOLD_M,
) -> tuple[dict[str, MetricsReport], MetricsReport]:
    """Evaluate a checkpoint (path) or generator model over a manifest split.

    Returns ({"catchment/pattern": report}, aggregate). With `out_dir` set,
    writes a metrics CSV, a text summary, and the truth/prediction/error
    image triptych per pattern.
    """
    if manifest.norm is None:
        raise ConfigError("manifest has no normalization constants; run `prepare` first")
    if isinstance(checkpoint, (str, Path)):
        from .training import load_checkpoint

        model = load_checkpoint(checkpoint).generator
    else:
        model = checkpoint
    model.eval()
    predict = model_predict_fn(model, manifest.norm)
    patch_size = model.config.patch_size

    pattern_ids = manifest.split_ids(split)
    reports: dict[str, MetricsReport] = {}
    emit_images = out_dir is not None
    if emit_images:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for name in manifest.catchments:
        raster, depth_grids = load_catchment_data(manifest, name)
        for pid in pattern_ids:
            if pid not in depth_grids:
                raise ConfigError(f"catchment {name!r} has no truth grid for pattern {pid!r}")
            pred = predict_full_map(predict, raster, manifest.patterns[pid], patch_size)
            key = f"{name}/{pid}"
            reports[key] = compute_report(pred, depth_grids[pid], raster.mask, threshold_m)
            if emit_images:
                from .visualize import error_map

                error_map(pred, depth_grids[pid], raster.mask, out_dir / f"{name}_{pid}")
            logger.info("%s: %s", key, _format_report(reports[key]))

    aggregate = aggregate_reports(reports)
    if out_dir is not None:
        write_metrics_csv(reports, aggregate, out_dir / f"metrics_{split}.csv")
        (out_dir / f"summary_{split}.txt").write_text(
            "\n".join(
                [f"{k}: {_format_report(r)}" for k, r in reports.items()]
                + [f"aggregate: {_format_report(aggregate)}", ""]
            )
        )
    return reports, aggregate


def _format_report(r: MetricsReport) -> str:
    return (
        f"MAE {r.mae_mm:.1f} mm, R2 {r.r2:.3f}, CSI {r.csi:.3f}, "
        f"area ratio {r.area_ratio:.2f}"
    )


def write_metrics_csv(reports, aggregate, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern", "mae_mm", "r2", "csi", "area_ratio", "n_pixels", "threshold_m"])
        for key, r in reports.items():
            writer.writerow([key, r.mae_mm, r.r2, r.csi, r.area_ratio, r.n_pixels, r.threshold_m])
        writer.writerow(
            ["aggregate", aggregate.mae_mm, aggregate.r2, aggregate.csi,
             aggregate.area_ratio, aggregate.n_pixels, aggregate.threshold_m]
        )
