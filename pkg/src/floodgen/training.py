"""Alternating D/G optimization with deterministic seeding and checkpoints.

Each step runs one discriminator update (generated samples detached) and
one generator update. Batch composition is a pure function of
(seed, epoch), so an interrupted run resumed from any checkpoint retraces
the uninterrupted loss trajectory exactly.
"""

from __future__ import annotations

import configparser
import logging
import queue
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .discriminator import Discriminator, DiscriminatorConfig
from .evaluation import aggregate_reports, evaluate_patterns, model_predict_fn
from .exceptions import ConfigError, FormatError, NumericalError
from .generator import Generator, GeneratorConfig
from .losses import (
    LossWeights,
    adversarial_loss,
    rainfall_reg_loss,
    reconstruction_loss,
    total_d_loss,
    total_g_loss,
)
from .manifest import load_catchment_data, load_manifest, normalize_rainfall, normalize_terrain

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "FGCK1"
CHECKPOINT_VERSION = 1

HISTORY_HEADER = (
    "epoch,step,l_adv,l_reg_r,l_reg_f,l_rec,l_d,l_g,mae,r2,csi,area_ratio"
)


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 80
    weights: LossWeights = field(default_factory=LossWeights)
    use_hta: bool = True
    use_mre: bool = True
    use_gan: bool = True
    use_reg: bool = True
    seed: int = 0
    checkpoint_interval: int = 10
    manifest_path: str = ""
    out_dir: str = "runs/default"
    patches_per_epoch: int = 10000
    patch_size: int = 256
    gen_channels: tuple[int, ...] = (64, 128, 256, 512)
    rainfall_channels: int = 16
    disc_channels: tuple[int, ...] = (64, 128, 256, 512)
    workers: int = 0
    threshold_m: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.use_reg and not self.use_gan:
            raise ConfigError("use_reg requires use_gan")
        self.gen_channels = tuple(int(c) for c in self.gen_channels)
        self.disc_channels = tuple(int(c) for c in self.disc_channels)

    def gen_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            encoder_channels=self.gen_channels,
            rainfall_channels=self.rainfall_channels,
            use_hta=self.use_hta,
            use_mre=self.use_mre,
            patch_size=self.patch_size,
        )

    def disc_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(widths=self.disc_channels)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "TrainConfig":
        """Read a `key = value` sections config file; overrides win."""
        cfg = configparser.ConfigParser()
        cfg.optionxform = str
        found = cfg.read(path)
        if not found:
            raise ConfigError(f"config file not found: {path}")

        kwargs: dict = {}

        def take(section, key, conv, dest=None):
            if cfg.has_option(section, key):
                kwargs[dest or key] = conv(cfg.get(section, key))

        as_bool = lambda s: s.strip().lower() in ("1", "true", "yes", "on")
        as_tuple = lambda s: tuple(int(v) for v in s.split(",") if v.strip())

        take("training", "learning_rate", float)
        take("training", "beta1", float)
        take("training", "beta2", float)
        take("training", "batch_size", int)
        take("training", "epochs", int)
        take("training", "seed", int)
        take("training", "checkpoint_interval", int)
        take("training", "patches_per_epoch", int)
        take("training", "workers", int)
        take("model", "patch_size", int)
        take("model", "gen_channels", as_tuple)
        take("model", "rainfall_channels", int)
        take("model", "disc_channels", as_tuple)
        take("ablation", "use_hta", as_bool)
        take("ablation", "use_mre", as_bool)
        take("ablation", "use_gan", as_bool)
        take("ablation", "use_reg", as_bool)
        take("data", "manifest", str, "manifest_path")
        take("data", "out_dir", str)
        take("data", "threshold_m", float)

        lw = {}
        for name in ("lambda_adv", "lambda_reg", "lambda_rec"):
            if cfg.has_option("loss", name):
                lw[name] = cfg.getfloat("loss", name)
        if lw:
            kwargs["weights"] = LossWeights(**{**LossWeights().__dict__, **lw})

        config = cls(**kwargs)
        if overrides:
            config = config.with_overrides(overrides)
        return config

    def with_overrides(self, overrides: dict) -> "TrainConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)


@dataclass
class TrainState:
    generator: Generator
    discriminator: Discriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    epoch: int = 0
    global_step: int = 0
    last_checkpoint: str | None = None


def init_state(config: TrainConfig) -> TrainState:
    generator = Generator(config.gen_config(), init_seed=config.seed)
    discriminator = Discriminator(config.disc_config(), init_seed=config.seed + 1)
    opt_g = torch.optim.Adam(
        generator.parameters(), lr=config.learning_rate, betas=(config.beta1, config.beta2)
    )
    opt_d = torch.optim.Adam(
        discriminator.parameters(), lr=config.learning_rate, betas=(config.beta1, config.beta2)
    )
    return TrainState(generator, discriminator, opt_g, opt_d)


def _zero(ref: torch.Tensor) -> torch.Tensor:
    return torch.zeros((), dtype=ref.dtype)


def train_step(batch: dict, state: TrainState, config: TrainConfig) -> dict:
    """One D update then one G update on a normalized batch.

    `batch` holds "terrain" (B,6,S,S), "rainfall" (B,12), and "depth"
    (B,1,S,S) tensors. The state is updated in place; the returned log maps
    every loss component to a float.
    """
    terrain, rain, depth = batch["terrain"], batch["rainfall"], batch["depth"]
    mask = terrain[:, 1:2]
    gen, disc = state.generator, state.discriminator
    weights = config.weights

    l_adv = l_reg_r = l_d = _zero(depth)
    if config.use_gan:
        valid = disc.subpatch_valid(mask)
        with torch.no_grad():
            fake_detached = gen(terrain, rain)
        state.opt_d.zero_grad()
        real_out = disc(depth, terrain)
        fake_out = disc(fake_detached, terrain)
        l_adv, _ = adversarial_loss(real_out.score_map, fake_out.score_map, valid)
        if config.use_reg:
            l_reg_r = rainfall_reg_loss(real_out.rainfall_estimate, rain)
        l_d = total_d_loss(l_adv, l_reg_r, weights)
        if not torch.isfinite(l_d):
            raise NumericalError("discriminator loss is non-finite", state.last_checkpoint)
        l_d.backward()
        state.opt_d.step()

    state.opt_g.zero_grad()
    fake = gen(terrain, rain)
    l_adv_g = l_reg_f = _zero(depth)
    if config.use_gan:
        fake_out_g = disc(fake, terrain)
        _, l_adv_g = adversarial_loss(
            real_out.score_map.detach(), fake_out_g.score_map, valid
        )
        if config.use_reg:
            l_reg_f = rainfall_reg_loss(fake_out_g.rainfall_estimate, rain)
    l_rec = reconstruction_loss(fake, depth, mask)
    l_g = total_g_loss(l_adv_g, l_reg_f, l_rec, weights)
    if not torch.isfinite(l_g):
        raise NumericalError("generator loss is non-finite", state.last_checkpoint)
    l_g.backward()
    state.opt_g.step()

    state.global_step += 1
    return {
        "l_adv": float(l_adv.detach()),
        "l_reg_r": float(l_reg_r.detach()),
        "l_reg_f": float(l_reg_f.detach()),
        "l_rec": float(l_rec.detach()),
        "l_d": float(l_d.detach()),
        "l_g": float(l_g.detach()),
    }


# ---------------------------------------------------------------------------
# Epoch data
# ---------------------------------------------------------------------------


class _TrainingData:
    """Normalized in-memory copies of every catchment used for sampling."""

    def __init__(self, manifest, config: TrainConfig):
        if manifest.norm is None:
            raise ConfigError("manifest has no normalization constants")
        self.norm = manifest.norm
        self.train_ids = list(manifest.train_ids)
        if not self.train_ids:
            raise ConfigError("manifest has an empty training split")
        self.rain = {
            pid: normalize_rainfall(manifest.patterns[pid].values, self.norm).astype(np.float32)
            for pid in self.train_ids
        }
        self.catchments = []
        for name in manifest.catchments:
            raster, depths = load_catchment_data(manifest, name)
            if raster.height < config.patch_size or raster.width < config.patch_size:
                raise ConfigError(
                    f"catchment {name!r} is smaller than patch size {config.patch_size}"
                )
            terrain_norm = normalize_terrain(raster.data, self.norm).astype(np.float32)
            depth_norm = {
                pid: np.clip(depths[pid] / self.norm.depth_max, 0.0, 1.0).astype(np.float32)
                for pid in self.train_ids
            }
            self.catchments.append((terrain_norm, depth_norm))


def _epoch_batches(data: _TrainingData, config: TrainConfig, epoch: int):
    """Deterministic batch stream for one epoch, derived only from (seed, epoch)."""
    rng = np.random.default_rng([config.seed, 7919, epoch])
    s = config.patch_size
    steps = max(1, config.patches_per_epoch // config.batch_size)
    for _ in range(steps):
        terrain = np.empty((config.batch_size, 6, s, s), dtype=np.float32)
        rain = np.empty((config.batch_size, 12), dtype=np.float32)
        depth = np.empty((config.batch_size, 1, s, s), dtype=np.float32)
        for b in range(config.batch_size):
            ci = int(rng.integers(len(data.catchments)))
            terrain_norm, depth_norm = data.catchments[ci]
            pid = data.train_ids[int(rng.integers(len(data.train_ids)))]
            r = int(rng.integers(0, terrain_norm.shape[1] - s + 1))
            c = int(rng.integers(0, terrain_norm.shape[2] - s + 1))
            terrain[b] = terrain_norm[:, r : r + s, c : c + s]
            rain[b] = data.rain[pid]
            depth[b, 0] = depth_norm[pid][r : r + s, c : c + s]
        yield {
            "terrain": torch.from_numpy(terrain),
            "rainfall": torch.from_numpy(rain),
            "depth": torch.from_numpy(depth),
        }


def _prefetch(iterator, depth: int):
    """Run an iterator in a background thread with a bounded queue.

    Order (hence determinism) is preserved; only overlap changes.
    """
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = object()

    def worker():
        for item in iterator:
            q.put(item)
        q.put(done)

    threading.Thread(target=worker, daemon=True).start()
    while True:
        item = q.get()
        if item is done:
            return
        yield item


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path, config: TrainConfig | None = None) -> None:
    params = {f"gen/{k}": v for k, v in state.generator.state_dict().items()}
    params.update({f"disc/{k}": v for k, v in state.discriminator.state_dict().items()})
    blob = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "gen_config": state.generator.config.to_dict(),
        "disc_config": state.discriminator.config.to_dict(),
        "epoch": state.epoch,
        "global_step": state.global_step,
        "params": params,
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "numpy_rng": np.random.get_state(),
        "learning_rate": config.learning_rate if config else None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(blob, path)
    state.last_checkpoint = str(path)


def load_checkpoint(path, expect_gen_config: GeneratorConfig | None = None) -> TrainState:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(blob, dict) or blob.get("magic") != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {blob.get('version')}")

    gen_config = GeneratorConfig.from_dict(blob["gen_config"])
    if expect_gen_config is not None and gen_config != expect_gen_config:
        raise ConfigError(
            f"{path}: checkpoint generator config {gen_config} does not match "
            f"expected {expect_gen_config}"
        )
    disc_config = DiscriminatorConfig.from_dict(blob["disc_config"])

    generator = Generator(gen_config)
    discriminator = Discriminator(disc_config)
    gen_sd = {k[len("gen/"):]: v for k, v in blob["params"].items() if k.startswith("gen/")}
    disc_sd = {k[len("disc/"):]: v for k, v in blob["params"].items() if k.startswith("disc/")}
    generator.load_state_dict(gen_sd)
    discriminator.load_state_dict(disc_sd)

    opt_g = torch.optim.Adam(generator.parameters())
    opt_d = torch.optim.Adam(discriminator.parameters())
    opt_g.load_state_dict(blob["opt_g"])
    opt_d.load_state_dict(blob["opt_d"])

    torch.set_rng_state(blob["torch_rng"])
    np.random.set_state(blob["numpy_rng"])

    return TrainState(
        generator=generator,
        discriminator=discriminator,
        opt_g=opt_g,
        opt_d=opt_d,
        epoch=int(blob["epoch"]),
        global_step=int(blob["global_step"]),
        last_checkpoint=str(path),
    )


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def _history_row(epoch, step, means, metrics) -> str:
    values = [
        means["l_adv"], means["l_reg_r"], means["l_reg_f"], means["l_rec"],
        means["l_d"], means["l_g"],
        metrics.mae_mm, metrics.r2, metrics.csi, metrics.area_ratio,
    ]
    return ",".join([str(epoch), str(step)] + [f"{v:.17g}" for v in values])


def train_loop(config: TrainConfig, resume_from=None):
    """Run the full schedule; returns (final checkpoint path, history rows).

    Writes `history.csv` (one row per epoch: losses plus held-out metrics)
    and periodic checkpoints into `config.out_dir`.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(config.manifest_path)
    data = _TrainingData(manifest, config)

    eval_sets = []
    for name in manifest.catchments:
        raster, depths = load_catchment_data(manifest, name)
        eval_sets.append((name, raster, depths))
    test_ids = manifest.split_ids("test")

    if resume_from is not None:
        state = load_checkpoint(resume_from, expect_gen_config=config.gen_config())
        logger.info("resumed from %s at epoch %d", resume_from, state.epoch)
    else:
        state = init_state(config)

    history_path = out_dir / "history.csv"
    fresh = resume_from is None or not history_path.exists()
    history: list[str] = []
    with open(history_path, "w" if fresh else "a") as history_file:
        if fresh:
            history_file.write(HISTORY_HEADER + "\n")

        for epoch in range(state.epoch + 1, config.epochs + 1):
            sums = dict.fromkeys(("l_adv", "l_reg_r", "l_reg_f", "l_rec", "l_d", "l_g"), 0.0)
            n_steps = 0
            batches = _epoch_batches(data, config, epoch)
            if config.workers > 0:
                batches = _prefetch(batches, depth=2 * config.workers)
            for batch in batches:
                log = train_step(batch, state, config)
                for key in sums:
                    sums[key] += log[key]
                n_steps += 1
            means = {k: v / n_steps for k, v in sums.items()}
            state.epoch = epoch

            state.generator.eval()
            predict = model_predict_fn(state.generator, data.norm)
            reports = {}
            for name, raster, depths in eval_sets:
                per = evaluate_patterns(
                    predict, raster, depths, manifest.patterns, test_ids,
                    config.patch_size, config.threshold_m,
                )
                reports.update({f"{name}/{pid}": rep for pid, rep in per.items()})
            metrics = aggregate_reports(reports)
            state.generator.train()

            row = _history_row(epoch, state.global_step, means, metrics)
            history.append(row)
            history_file.write(row + "\n")
            history_file.flush()
            logger.info(
                "epoch %d/%d: l_g=%.4f l_d=%.4f l_rec=%.4f mae=%.1fmm csi=%.3f",
                epoch, config.epochs, means["l_g"], means["l_d"], means["l_rec"],
                metrics.mae_mm, metrics.csi,
            )

            if epoch % config.checkpoint_interval == 0 or epoch == config.epochs:
                save_checkpoint(state, out_dir / f"checkpoint_ep{epoch}.ckpt", config)

    final_path = out_dir / "checkpoint_final.ckpt"
    save_checkpoint(state, final_path, config)
    return final_path, history
