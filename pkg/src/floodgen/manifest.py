"""Dataset manifest: catchment paths, the rainfall split, and normalization.

The manifest is a `key = value` sections file (configparser syntax) sitting
next to the data it describes; all paths inside it are relative to its own
directory. Normalization constants are always derived from training-split
patterns only.
"""

from __future__ import annotations

import configparser
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, FormatError, InvalidInput
from .patches import DepthPatch, RainfallPattern, TerrainPatch
from .raster_io import load_raster, read_depth_grid, read_rainfall_csv
from .terrain import TerrainRaster

logger = logging.getLogger(__name__)

MASK_CHANNEL = 1


@dataclass
class NormConstants:
    """Per-channel terrain standardization plus depth/rainfall scale factors."""

    terrain_mean: np.ndarray
    terrain_std: np.ndarray
    depth_max: float
    rainfall_max: float

    def __post_init__(self):
        self.terrain_mean = np.asarray(self.terrain_mean, dtype=np.float32).reshape(6)
        self.terrain_std = np.asarray(self.terrain_std, dtype=np.float32).reshape(6)
        if not (
            np.all(np.isfinite(self.terrain_mean))
            and np.all(np.isfinite(self.terrain_std))
            and np.isfinite(self.depth_max)
            and np.isfinite(self.rainfall_max)
        ):
            raise InvalidInput("normalization constants must be finite")
        if self.depth_max <= 0 or self.rainfall_max <= 0:
            raise InvalidInput("depth_max and rainfall_max must be positive")

    def safe_std(self) -> np.ndarray:
        std = self.terrain_std.copy()
        zero = std == 0
        if np.any(zero):
            warnings.warn("zero-std terrain channel(s); substituting std=1", stacklevel=3)
            std[zero] = 1.0
        return std


@dataclass
class CatchmentEntry:
    terrain_path: Path
    depth_paths: dict[str, Path]


@dataclass
class DatasetManifest:
    catchments: dict[str, CatchmentEntry]
    patterns: dict[str, RainfallPattern]
    train_ids: list[str]
    test_ids: list[str]
    norm: NormConstants | None = None
    rainfall_path: Path | None = None
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise InvalidInput(f"train/test splits overlap: {sorted(overlap)}")
        declared = set(self.train_ids) | set(self.test_ids)
        if self.train_ids and declared != set(self.patterns):
            raise InvalidInput("train + test splits must cover exactly the pattern table")

    def split_ids(self, split: str) -> list[str]:
        if split == "train":
            return list(self.train_ids)
        if split == "test":
            return list(self.test_ids)
        raise InvalidInput(f"split must be 'train' or 'test', got {split!r}")


def split_patterns(patterns, rng_seed: int) -> tuple[list[str], list[str]]:
    """Random disjoint train/test pattern split, ~2/3 train (12/6 for 18)."""
    ids = [p.id for p in patterns]
    n = len(ids)
    if n < 2:
        raise InvalidInput(f"need at least 2 rainfall patterns to split, got {n}")
    n_train = min(max(1, round(2 * n / 3)), n - 1)
    order = np.random.default_rng(rng_seed).permutation(n)
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def compute_norm_constants(
    rasters: list[TerrainRaster],
    train_depth_grids: list[list[np.ndarray]],
    train_patterns: list[RainfallPattern],
) -> NormConstants:
    """Derive normalization constants from training data only.

    `train_depth_grids` holds, per raster, the depth grids of the training
    patterns. Terrain statistics are taken over effective pixels; the mask
    channel is pinned to mean 0 / std 1 so it passes through normalization
    unchanged.
    """
    values = [r.data[:, r.effective] for r in rasters]  # (6, n_eff) each
    stacked = np.concatenate(values, axis=1).astype(np.float64)
    if stacked.shape[1] == 0:
        raise InvalidInput("no effective pixels in any raster")
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    mean[MASK_CHANNEL] = 0.0
    std[MASK_CHANNEL] = 1.0
    zero = std == 0
    if np.any(zero):
        logger.warning(
            "terrain channel(s) %s have zero variance; using std=1", np.nonzero(zero)[0].tolist()
        )
        std[zero] = 1.0

    depth_max = 0.0
    for raster, grids in zip(rasters, train_depth_grids):
        eff = raster.effective
        if not np.any(eff):
            continue
        for grid in grids:
            depth_max = max(depth_max, float(np.max(np.asarray(grid)[eff])))
    if depth_max <= 0:
        logger.warning("training depth grids are all zero; using depth_max=1")
        depth_max = 1.0

    rainfall_max = max((float(p.values.max()) for p in train_patterns), default=0.0)
    if rainfall_max <= 0:
        logger.warning("training rainfall patterns are all zero; using rainfall_max=1")
        rainfall_max = 1.0

    return NormConstants(mean, std, depth_max, rainfall_max)


# ---------------------------------------------------------------------------
# Normalization ops (inverse pair). Terrain channels are standardized except
# the mask; depth maps to [0,1] by depth_max with clipping; rainfall scales
# by rainfall_max.
# ---------------------------------------------------------------------------


# computed in float64 so normalize/denormalize round-trip below 1e-6 even for
# ~100 m DEM values; network code casts to float32 at batch assembly


def normalize_terrain(data: np.ndarray, norm: NormConstants) -> np.ndarray:
    std = norm.safe_std().astype(np.float64)
    out = (np.asarray(data, np.float64) - norm.terrain_mean.astype(np.float64)[:, None, None])
    out /= std[:, None, None]
    out[MASK_CHANNEL] = data[MASK_CHANNEL]
    return out


def denormalize_terrain(data: np.ndarray, norm: NormConstants) -> np.ndarray:
    std = norm.safe_std().astype(np.float64)
    out = np.asarray(data, np.float64) * std[:, None, None]
    out += norm.terrain_mean.astype(np.float64)[:, None, None]
    out[MASK_CHANNEL] = data[MASK_CHANNEL]
    return out


def normalize_depth(data: np.ndarray, norm: NormConstants) -> np.ndarray:
    return np.clip(np.asarray(data, np.float64) / norm.depth_max, 0.0, 1.0)


def denormalize_depth(data: np.ndarray, norm: NormConstants) -> np.ndarray:
    return np.asarray(data, np.float64) * norm.depth_max


def normalize_rainfall(values: np.ndarray, norm: NormConstants) -> np.ndarray:
    return np.asarray(values, np.float64) / norm.rainfall_max


def denormalize_rainfall(values: np.ndarray, norm: NormConstants) -> np.ndarray:
    return np.asarray(values, np.float64) * norm.rainfall_max


def _resolve_norm(norm) -> NormConstants:
    if isinstance(norm, NormConstants):
        return norm
    if isinstance(norm, DatasetManifest):
        if norm.norm is None:
            raise InvalidInput("manifest carries no normalization constants")
        return norm.norm
    raise InvalidInput(f"expected NormConstants or DatasetManifest, got {type(norm).__name__}")


def normalize(obj, norm):
    """Type-dispatching normalize over patches and rainfall patterns.

    `norm` may be the constants themselves or a manifest that carries them.
    """
    norm = _resolve_norm(norm)
    if isinstance(obj, TerrainPatch):
        return TerrainPatch(normalize_terrain(obj.data, norm), obj.origin_row, obj.origin_col)
    if isinstance(obj, DepthPatch):
        return DepthPatch(normalize_depth(obj.data, norm), obj.origin_row, obj.origin_col)
    if isinstance(obj, RainfallPattern):
        return RainfallPattern(obj.id, normalize_rainfall(obj.values, norm))
    raise InvalidInput(f"cannot normalize object of type {type(obj).__name__}")


def denormalize(obj, norm):
    norm = _resolve_norm(norm)
    if isinstance(obj, TerrainPatch):
        return TerrainPatch(denormalize_terrain(obj.data, norm), obj.origin_row, obj.origin_col)
    if isinstance(obj, DepthPatch):
        return DepthPatch(denormalize_depth(obj.data, norm), obj.origin_row, obj.origin_col)
    if isinstance(obj, RainfallPattern):
        return RainfallPattern(obj.id, denormalize_rainfall(obj.values, norm))
    raise InvalidInput(f"cannot denormalize object of type {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Manifest file io
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        p = Path(p)
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return p.as_posix()

    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    cfg["catchments"] = {"ids": ",".join(manifest.catchments)}
    if manifest.rainfall_path is not None:
        cfg["rainfall"] = {"table": rel(manifest.rainfall_path)}
    cfg["split"] = {
        "train": ",".join(manifest.train_ids),
        "test": ",".join(manifest.test_ids),
    }
    if manifest.norm is not None:
        cfg["normalization"] = {
            "depth_max": repr(float(manifest.norm.depth_max)),
            "rainfall_max": repr(float(manifest.norm.rainfall_max)),
            "terrain_mean": ",".join(repr(float(v)) for v in manifest.norm.terrain_mean),
            "terrain_std": ",".join(repr(float(v)) for v in manifest.norm.terrain_std),
        }
    for name, entry in manifest.catchments.items():
        cfg[f"catchment:{name}"] = {"terrain": rel(entry.terrain_path)}
        cfg[f"depths:{name}"] = {pid: rel(p) for pid, p in entry.depth_paths.items()}
    with open(path, "w") as fh:
        cfg.write(fh)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    base = path.parent
    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    try:
        cfg.read(path)
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc

    try:
        ids = [s for s in cfg["catchments"]["ids"].split(",") if s]
        catchments = {}
        for name in ids:
            entry = CatchmentEntry(
                terrain_path=base / cfg[f"catchment:{name}"]["terrain"],
                depth_paths={
                    pid: base / rel for pid, rel in cfg[f"depths:{name}"].items()
                },
            )
            catchments[name] = entry
        rainfall_path = base / cfg["rainfall"]["table"]
        patterns = {p.id: p for p in read_rainfall_csv(rainfall_path)}
        train = [s for s in cfg["split"]["train"].split(",") if s]
        test = [s for s in cfg["split"]["test"].split(",") if s]
        norm = None
        if cfg.has_section("normalization"):
            sec = cfg["normalization"]
            norm = NormConstants(
                terrain_mean=np.array(_floats(sec["terrain_mean"])),
                terrain_std=np.array(_floats(sec["terrain_std"])),
                depth_max=float(sec["depth_max"]),
                rainfall_max=float(sec["rainfall_max"]),
            )
    except KeyError as exc:
        raise FormatError(f"{path}: missing manifest key {exc}") from exc

    return DatasetManifest(
        catchments=catchments,
        patterns=patterns,
        train_ids=train,
        test_ids=test,
        norm=norm,
        rainfall_path=rainfall_path,
        base_dir=base,
    )


def load_catchment_data(manifest: DatasetManifest, name: str):
    """Load one catchment's terrain raster and its per-pattern depth grids."""
    entry = manifest.catchments[name]
    raster = load_raster(entry.terrain_path)
    depths = {}
    for pid, depth_path in entry.depth_paths.items():
        grid, _ = read_depth_grid(depth_path)
        if grid.shape != (raster.height, raster.width):
            raise ConfigError(
                f"depth grid {depth_path} shape {grid.shape} does not match raster"
            )
        depths[pid] = grid
    return raster, depths


def build_dataset(out_dir, raster, depths: dict, patterns, rng_seed: int) -> Path:
    """Lay a complete dataset on disk: raster, depth grids, rainfall table,
    and a manifest with split and normalization. Returns the manifest path."""
    from .raster_io import save_raster, write_depth_grid, write_rainfall_csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    terrain_path = out_dir / "terrain.flr"
    save_raster(raster, terrain_path)
    depth_dir = out_dir / "depths"
    depth_dir.mkdir(exist_ok=True)
    depth_paths = {}
    for pid, grid in depths.items():
        depth_paths[pid] = depth_dir / f"{pid}.flr"
        write_depth_grid(depth_paths[pid], grid, raster.cell_size)
    rainfall_path = out_dir / "rainfall.csv"
    write_rainfall_csv(patterns, rainfall_path)

    train_ids, test_ids = split_patterns(patterns, rng_seed)
    norm = compute_norm_constants(
        [raster],
        [[depths[pid] for pid in train_ids]],
        [p for p in patterns if p.id in set(train_ids)],
    )
    manifest = DatasetManifest(
        catchments={"main": CatchmentEntry(terrain_path, depth_paths)},
        patterns={p.id: p for p in patterns},
        train_ids=train_ids,
        test_ids=test_ids,
        norm=norm,
        rainfall_path=rainfall_path,
        base_dir=out_dir,
    )
    manifest_path = out_dir / "manifest.cfg"
    save_manifest(manifest, manifest_path)
    logger.info("dataset written to %s (train=%s test=%s)", out_dir, train_ids, test_ids)
    return manifest_path
