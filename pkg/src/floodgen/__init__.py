"""floodgen: conditional GAN mapping terrain rasters and rainfall
hyetographs to maximum water-depth maps."""

from .discriminator import Discriminator, DiscriminatorConfig, patch_score_average
from .exceptions import (
    ConfigError,
    FloodgenError,
    FormatError,
    InvalidInput,
    NumericalError,
)
from .generator import Generator, GeneratorConfig, SpatialAttention, apply_attention
from .losses import LossWeights
from .manifest import DatasetManifest, NormConstants, load_manifest, save_manifest
from .patches import DepthPatch, RainfallPattern, TerrainPatch
from .terrain import TerrainRaster, derive_channels
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_loop

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetManifest",
    "DepthPatch",
    "Discriminator",
    "DiscriminatorConfig",
    "FloodgenError",
    "FormatError",
    "Generator",
    "GeneratorConfig",
    "InvalidInput",
    "LossWeights",
    "NormConstants",
    "NumericalError",
    "RainfallPattern",
    "SpatialAttention",
    "TerrainPatch",
    "TerrainRaster",
    "TrainConfig",
    "apply_attention",
    "derive_channels",
    "load_checkpoint",
    "load_manifest",
    "patch_score_average",
    "save_checkpoint",
    "save_manifest",
    "train_loop",
]
