"""Depth-map generator: encoder-decoder with terrain spatial attention on the
skip connections and coarse-to-fine rainfall features in the decoder.

Without the rainfall branch (`use_mre=False`) the network degenerates to a
plain U-Net over terrain alone and the hyetograph input is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .exceptions import InvalidInput, NumericalError

RAINFALL_DIM = 12


def init_weights(module: nn.Module, seed: int) -> None:
    """Seeded normal(0, 0.02) re-init of all conv/linear weights, zero biases.

    Uses a local generator so model construction never consumes (or depends
    on) torch's global RNG state.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            m.weight.data.normal_(0.0, 0.02, generator=gen)
            if m.bias is not None:
                m.bias.data.zero_()


class SpatialAttention(nn.Module):
    """Sigmoid spatial weight map from channel-pooled features.

    Average and max pooling along channels give two 1xHxW maps; a 7x7 conv
    over their concatenation, squashed through a sigmoid, yields the weight
    map. The channel average sums sorted values so the map is bit-identical
    under any permutation of input channels.
    """

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=True)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        squeeze = features.dim() == 3
        if squeeze:
            features = features.unsqueeze(0)
        if features.dim() != 4 or features.shape[1] < 1:
            raise InvalidInput(f"expected (B, C, H, W) features, got {tuple(features.shape)}")
        if not torch.isfinite(features).all():
            raise NumericalError("non-finite values in attention input")
        avg = torch.sort(features, dim=1).values.mean(dim=1, keepdim=True)
        peak = features.amax(dim=1, keepdim=True)
        attention = torch.sigmoid(self.conv(torch.cat([avg, peak], dim=1)))
        return attention.squeeze(0) if squeeze else attention


def apply_attention(features: torch.Tensor, attention: torch.Tensor) -> torch.Tensor:
    """Element-wise reweighting of features by a 1-channel attention map."""
    if features.shape[-2:] != attention.shape[-2:]:
        raise InvalidInput(
            f"attention {tuple(attention.shape)} does not match features "
            f"{tuple(features.shape)} spatially"
        )
    return attention * features


class RainfallEmbedding(nn.Module):
    """Map the 12-vector to feature grids at each decoder input scale.

    A linear projection forms the coarsest grid (base x base); each further
    scale doubles the previous one with a 2x2 stride-2 transposed conv.
    ReLU activations throughout.
    """

    def __init__(self, channels: int, base_size: int, levels: int):
        super().__init__()
        self.channels = channels
        self.base_size = base_size
        self.project = nn.Linear(RAINFALL_DIM, channels * base_size * base_size)
        self.upscales = nn.ModuleList(
            nn.ConvTranspose2d(channels, channels, kernel_size=2, stride=2)
            for _ in range(levels - 1)
        )

    def forward(self, rainfall: torch.Tensor) -> list[torch.Tensor]:
        if rainfall.dim() == 1:
            rainfall = rainfall.unsqueeze(0)
        if rainfall.shape[-1] != RAINFALL_DIM:
            raise InvalidInput(
                f"rainfall vector must have {RAINFALL_DIM} entries, got {rainfall.shape[-1]}"
            )
        grid = self.project(rainfall).view(-1, self.channels, self.base_size, self.base_size)
        features = [torch.relu(grid)]
        for up in self.upscales:
            features.append(torch.relu(up(features[-1])))
        return features


@dataclass
class GeneratorConfig:
    in_channels: int = 6
    encoder_channels: tuple[int, ...] = (64, 128, 256, 512)
    rainfall_channels: int = 16
    use_hta: bool = True
    use_mre: bool = True
    patch_size: int = 256

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        depth = len(self.encoder_channels)
        if depth < 1 or any(c < 1 for c in self.encoder_channels):
            raise InvalidInput(f"bad encoder widths {self.encoder_channels}")
        if self.patch_size % 2**depth != 0:
            raise InvalidInput(
                f"patch size {self.patch_size} is not divisible by 2^{depth}"
            )
        if self.patch_size // 2**depth < 2:
            raise InvalidInput(
                f"patch size {self.patch_size} leaves a <2px bottleneck at depth {depth}"
            )

    @property
    def depth(self) -> int:
        return len(self.encoder_channels)

    @property
    def base_size(self) -> int:
        return self.patch_size // 2**self.depth

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "encoder_channels": list(self.encoder_channels),
            "rainfall_channels": self.rainfall_channels,
            "use_hta": self.use_hta,
            "use_mre": self.use_mre,
            "patch_size": self.patch_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(
            in_channels=int(d["in_channels"]),
            encoder_channels=tuple(d["encoder_channels"]),
            rainfall_channels=int(d["rainfall_channels"]),
            use_hta=bool(d["use_hta"]),
            use_mre=bool(d["use_mre"]),
            patch_size=int(d["patch_size"]),
        )


def _conv_block(in_ch: int, out_ch: int, norm: bool, leaky: bool) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, 3, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(out_ch))
    layers.append(nn.LeakyReLU(0.2) if leaky else nn.ReLU())
    return nn.Sequential(*layers)


class _EncoderLevel(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, use_hta: bool, first: bool):
        super().__init__()
        self.refine = _conv_block(in_ch, out_ch, norm=not first, leaky=True)
        self.down = nn.Sequential(
            nn.Conv2d(out_ch, out_ch, 4, stride=2, padding=1),
            nn.InstanceNorm2d(out_ch),
            nn.LeakyReLU(0.2),
        )
        self.attention = SpatialAttention() if use_hta else None

    def forward(self, x):
        feat = self.refine(x)
        if self.attention is not None:
            attn = self.attention(feat)
            skip = apply_attention(feat, attn)
        else:
            attn = None
            skip = feat
        return self.down(feat), skip, attn


class _DecoderStage(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.up = nn.Sequential(
            nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1),
            nn.InstanceNorm2d(out_ch),
            nn.ReLU(),
        )
        self.fuse = _conv_block(out_ch + skip_ch, out_ch, norm=True, leaky=False)

    def forward(self, x, skip):
        x = self.up(x)
        return self.fuse(torch.cat([x, skip], dim=1))


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig, init_seed: int | None = None):
        super().__init__()
        self.config = config
        widths = config.encoder_channels
        depth = config.depth

        self.encoder = nn.ModuleList()
        in_ch = config.in_channels
        for i, w in enumerate(widths):
            self.encoder.append(_EncoderLevel(in_ch, w, config.use_hta, first=i == 0))
            in_ch = w

        self.bottleneck = _conv_block(widths[-1], widths[-1], norm=True, leaky=False)

        self.rainfall = (
            RainfallEmbedding(config.rainfall_channels, config.base_size, depth)
            if config.use_mre
            else None
        )
        extra = config.rainfall_channels if config.use_mre else 0

        self.decoder = nn.ModuleList()
        for j in range(depth):
            level = depth - 1 - j
            in_stage = widths[-1] if j == 0 else widths[level + 1]
            self.decoder.append(_DecoderStage(in_stage + extra, widths[level], widths[level]))

        self.head = nn.Conv2d(widths[0], 1, kernel_size=1)

        if init_seed is not None:
            init_weights(self, init_seed)

    def forward(self, terrain: torch.Tensor, rainfall: torch.Tensor, return_internals: bool = False):
        s = self.config.patch_size
        if terrain.dim() != 4 or terrain.shape[1:] != (self.config.in_channels, s, s):
            raise InvalidInput(
                f"terrain batch must be (B, {self.config.in_channels}, {s}, {s}), "
                f"got {tuple(terrain.shape)}"
            )
        if rainfall.dim() != 2 or rainfall.shape != (terrain.shape[0], RAINFALL_DIM):
            raise InvalidInput(
                f"rainfall batch must be ({terrain.shape[0]}, {RAINFALL_DIM}), "
                f"got {tuple(rainfall.shape)}"
            )

        skips, attentions = [], []
        x = terrain
        for level in self.encoder:
            x, skip, attn = level(x)
            skips.append(skip)
            attentions.append(attn)
        x = self.bottleneck(x)

        rain_features = self.rainfall(rainfall) if self.rainfall is not None else None
        for j, stage in enumerate(self.decoder):
            if rain_features is not None:
                x = torch.cat([x, rain_features[j]], dim=1)
            x = stage(x, skips[len(skips) - 1 - j])

        out = torch.sigmoid(self.head(x))
        if return_internals:
            return out, {"attention": attentions, "skips": skips}
        return out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
