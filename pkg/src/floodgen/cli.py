"""Command-line entry point.

Subcommands: synth, prepare, train, eval, predict, attn. Exit codes:
0 success, 1 user error (bad flags, malformed inputs), 2 internal error.
Log level comes from FLOODGEN_LOG (debug/info/warn).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .exceptions import FloodgenError

logger = logging.getLogger("floodgen")

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract here is 1 for user errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level_name = os.environ.get("FLOODGEN_LOG", "info").lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}.get(
        level_name, logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="floodgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", parents=[], help="generate a synthetic catchment dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--size", type=int, default=512, help="catchment size in pixels")
    p_synth.add_argument("--patterns", type=int, default=18, help="number of rainfall patterns")
    p_synth.add_argument("--cell-size", type=float, default=10.0, help="cell size in metres")

    p_prep = sub.add_parser("prepare", help="derive channels, split patterns, compute normalization")
    p_prep.add_argument("--raster", required=True,
                        help="terrain raster: 2-channel (dem, mask) or ready 6-channel")
    p_prep.add_argument("--depths", required=True, help="directory of <pattern>.flr depth grids")
    p_prep.add_argument("--rainfall", required=True, help="rainfall pattern CSV")
    p_prep.add_argument("--out", required=True, help="output dataset directory")
    p_prep.add_argument("--seed", type=int, default=0)

    p_train = sub.add_parser("train", help="train the generator/discriminator pair")
    p_train.add_argument("--config", help="key = value sections config file")
    p_train.add_argument("--manifest", help="dataset manifest path")
    p_train.add_argument("--out", help="run output directory")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--workers", type=int)
    p_train.add_argument("--checkpoint", help="resume from this checkpoint")
    p_train.add_argument("--no-hta", action="store_true", help="disable terrain spatial attention")
    p_train.add_argument("--no-mre", action="store_true", help="disable rainfall embedding")
    p_train.add_argument("--no-gan", action="store_true", help="disable adversarial training")
    p_train.add_argument("--no-reg", action="store_true", help="disable rainfall regression loss")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--split", choices=("train", "test"), default="test")
    p_eval.add_argument("--out", required=True, help="directory for metrics and images")

    p_pred = sub.add_parser("predict", help="tiled inference to a depth raster")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--manifest", required=True)
    p_pred.add_argument("--pattern", required=True, help="rainfall pattern id from the manifest")
    p_pred.add_argument("--catchment", help="catchment id (default: first in manifest)")
    p_pred.add_argument("--out", required=True, help="output .flr raster path")

    p_attn = sub.add_parser("attn", help="render attention heatmaps for one patch")
    p_attn.add_argument("--checkpoint", required=True)
    p_attn.add_argument("--manifest", required=True)
    p_attn.add_argument("--patch", type=int, default=0, help="tile index into the inference grid")
    p_attn.add_argument("--pattern", help="rainfall pattern id (default: first test pattern)")
    p_attn.add_argument("--mode", choices=("raw", "grad_cam"), default="raw")
    p_attn.add_argument("--out", required=True, help="directory for heatmap images")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .manifest import build_dataset
    from .synth import synth_catchment, synth_rainfall_patterns

    patterns = synth_rainfall_patterns(args.seed, args.patterns)
    raster, depths, patterns = synth_catchment(
        args.seed, args.size, patterns, cell_size=args.cell_size
    )
    manifest_path = build_dataset(Path(args.out), raster, depths, patterns, args.seed)
    print(manifest_path)
    return EXIT_OK


def cmd_prepare(args) -> int:
    from .exceptions import FormatError
    from .manifest import build_dataset
    from .raster_io import read_depth_grid, read_rainfall_csv, read_raster
    from .terrain import TerrainRaster, derive_channels

    data, cell_size = read_raster(args.raster)
    if data.shape[0] == 2:
        raster = derive_channels(data[0], data[1], cell_size)
    elif data.shape[0] == 6:
        raster = TerrainRaster(data, cell_size)
    else:
        raise FormatError(
            f"{args.raster}: expected 2 (dem, mask) or 6 channels, found {data.shape[0]}"
        )
    patterns = read_rainfall_csv(args.rainfall)
    depths = {}
    for pattern in patterns:
        depth_path = Path(args.depths) / f"{pattern.id}.flr"
        if not depth_path.exists():
            raise FormatError(f"missing depth grid {depth_path}")
        depths[pattern.id], _ = read_depth_grid(depth_path)
    manifest_path = build_dataset(Path(args.out), raster, depths, patterns, args.seed)
    print(manifest_path)
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import TrainConfig, train_loop

    overrides = {
        "manifest_path": args.manifest,
        "out_dir": args.out,
        "seed": args.seed,
        "epochs": args.epochs,
        "workers": args.workers,
    }
    for flag, field in (("no_hta", "use_hta"), ("no_mre", "use_mre"),
                        ("no_gan", "use_gan"), ("no_reg", "use_reg")):
        if getattr(args, flag):
            overrides[field] = False
    # disabling the GAN implies dropping the regression head's loss too
    if args.no_gan and "use_reg" not in overrides:
        overrides["use_reg"] = False

    if args.config:
        config = TrainConfig.from_file(args.config, overrides)
    else:
        config = TrainConfig().with_overrides(overrides)
    if not config.manifest_path:
        raise FloodgenError("no manifest given (use --manifest or the config file)")

    final, _ = train_loop(config, resume_from=args.checkpoint)
    print(final)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_model
    from .manifest import load_manifest

    manifest = load_manifest(args.manifest)
    reports, aggregate = evaluate_model(args.checkpoint, manifest, args.split, args.out)
    print(
        f"{args.split} aggregate over {len(reports)} patterns: "
        f"MAE {aggregate.mae_mm:.1f} mm, R2 {aggregate.r2:.3f}, "
        f"CSI {aggregate.csi:.3f}, area ratio {aggregate.area_ratio:.2f}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    from .evaluation import model_predict_fn, predict_full_map
    from .exceptions import ConfigError
    from .manifest import load_catchment_data, load_manifest
    from .raster_io import write_depth_grid
    from .training import load_checkpoint

    manifest = load_manifest(args.manifest)
    if manifest.norm is None:
        raise ConfigError("manifest has no normalization constants")
    if args.pattern not in manifest.patterns:
        raise ConfigError(f"pattern {args.pattern!r} not in manifest")
    name = args.catchment or next(iter(manifest.catchments))
    if name not in manifest.catchments:
        raise ConfigError(f"catchment {name!r} not in manifest")

    state = load_checkpoint(args.checkpoint)
    state.generator.eval()
    raster, _ = load_catchment_data(manifest, name)
    predict = model_predict_fn(state.generator, manifest.norm)
    grid = predict_full_map(
        predict, raster, manifest.patterns[args.pattern], state.generator.config.patch_size
    )
    grid = np.where(raster.effective, grid, 0.0).astype(np.float32)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_depth_grid(args.out, grid, raster.cell_size)
    print(args.out)
    return EXIT_OK


def cmd_attn(args) -> int:
    from .exceptions import ConfigError
    from .manifest import load_catchment_data, load_manifest
    from .patches import DepthPatch, TerrainPatch, tile_offsets
    from .training import load_checkpoint
    from .visualize import visualize_attention

    manifest = load_manifest(args.manifest)
    if manifest.norm is None:
        raise ConfigError("manifest has no normalization constants")
    pattern_id = args.pattern or (manifest.test_ids or list(manifest.patterns))[0]
    if pattern_id not in manifest.patterns:
        raise ConfigError(f"pattern {pattern_id!r} not in manifest")

    state = load_checkpoint(args.checkpoint)
    model = state.generator
    name = next(iter(manifest.catchments))
    raster, depths = load_catchment_data(manifest, name)
    offsets = tile_offsets(raster.height, raster.width, model.config.patch_size)
    if not 0 <= args.patch < len(offsets):
        raise ConfigError(f"--patch must be in [0, {len(offsets)}), got {args.patch}")
    row, col = offsets[args.patch]
    size = model.config.patch_size
    tpatch = TerrainPatch(raster.data[:, row : row + size, col : col + size], row, col)
    truth = None
    if pattern_id in depths:
        truth = DepthPatch(depths[pattern_id][None, row : row + size, col : col + size], row, col)

    paths = visualize_attention(
        model, tpatch, manifest.patterns[pattern_id], manifest.norm,
        args.out, mode=args.mode, truth=truth,
    )
    for path in paths:
        print(path)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "attn": cmd_attn,
}


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (FloodgenError, FileNotFoundError) as exc:
        print(f"floodgen {args.command}: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"floodgen {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
