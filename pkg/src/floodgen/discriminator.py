"""Conditional patch discriminator with a rainfall regression head.

The trunk is the stock 70x70-receptive-field stack (4x4 kernels, strides
2,2,2,1 over widths 64/128/256/512, then a stride-1 scoring conv). Depth
and terrain are concatenated on the channel axis before the first layer.
The scoring head emits one realism logit per sub-patch; the regression
head pools the trunk and regresses the 12 hyetograph intensities.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import InvalidInput
from .generator import RAINFALL_DIM, init_weights
from .losses import MAX_NODATA_FRACTION


@dataclass
class DiscriminatorConfig:
    in_channels: int = 7  # 1 depth + 6 terrain
    widths: tuple[int, ...] = (64, 128, 256, 512)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2:
            raise InvalidInput("discriminator needs at least 2 trunk layers")

    def conv_specs(self) -> list[tuple[int, int, int]]:
        """(kernel, stride, padding) for every conv, scoring head included."""
        specs = [(4, 2, 1) for _ in self.widths[:-1]]
        specs.append((4, 1, 1))
        specs.append((4, 1, 1))  # scoring head
        return specs

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "widths": list(self.widths)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        return cls(in_channels=int(d["in_channels"]), widths=tuple(d["widths"]))


def stack_geometry(specs: list[tuple[int, int, int]]) -> tuple[int, int, int]:
    """Receptive field, total stride, and total padding of a conv chain."""
    rf, stride, pad = 1, 1, 0
    for k, s, p in specs:
        rf += (k - 1) * stride
        pad += p * stride
        stride *= s
    return rf, stride, pad


@dataclass
class DiscriminatorOutput:
    score_map: torch.Tensor  # (B, 1, h, w) realism logits per sub-patch
    rainfall_estimate: torch.Tensor  # (B, 12)


class Discriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig | None = None, init_seed: int | None = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        widths = self.config.widths

        # no normalization layers: spatial-statistics norms couple distant
        # pixels and would break the strict 70x70 receptive field
        layers: list[nn.Module] = []
        in_ch = self.config.in_channels
        for i, w in enumerate(widths):
            stride = 2 if i < len(widths) - 1 else 1
            layers.append(nn.Conv2d(in_ch, w, 4, stride=stride, padding=1))
            layers.append(nn.LeakyReLU(0.2))
            in_ch = w
        self.trunk = nn.Sequential(*layers)
        self.score_head = nn.Conv2d(widths[-1], 1, 4, stride=1, padding=1)
        self.reg_head = nn.Linear(widths[-1], RAINFALL_DIM)

        self.receptive_field, self.stride, self.padding = stack_geometry(self.config.conv_specs())

        if init_seed is not None:
            init_weights(self, init_seed)

    def forward(self, depth: torch.Tensor, terrain: torch.Tensor) -> DiscriminatorOutput:
        if depth.dim() != 4 or terrain.dim() != 4:
            raise InvalidInput("depth and terrain must be batched (B, C, H, W) tensors")
        if depth.shape[0] != terrain.shape[0] or depth.shape[-2:] != terrain.shape[-2:]:
            raise InvalidInput(
                f"depth {tuple(depth.shape)} and terrain {tuple(terrain.shape)} "
                "are not co-registered"
            )
        x = torch.cat([depth, terrain], dim=1)
        if x.shape[1] != self.config.in_channels:
            raise InvalidInput(
                f"expected {self.config.in_channels} stacked channels, got {x.shape[1]}"
            )
        features = self.trunk(x)
        score_map = self.score_head(features)
        pooled = features.mean(dim=(2, 3))
        rainfall = self.reg_head(pooled)
        return DiscriminatorOutput(score_map=score_map, rainfall_estimate=rainfall)

    def subpatch_nodata_fraction(self, mask: torch.Tensor) -> torch.Tensor:
        """Per-logit fraction of no-data inside its receptive field.

        `mask` is the (B, 1, H, W) terrain mask channel (+1/-1). Average
        pooling with the trunk's composite geometry reproduces the score
        map's footprint exactly; border windows average in-bounds cells only.
        """
        nodata = (mask < 0).float()
        return F.avg_pool2d(
            nodata,
            kernel_size=self.receptive_field,
            stride=self.stride,
            padding=self.padding,
            count_include_pad=False,
        )

    def subpatch_valid(
        self, mask: torch.Tensor, max_nodata: float = MAX_NODATA_FRACTION
    ) -> torch.Tensor:
        """Boolean score-map mask: sub-patches with >= `max_nodata` no-data drop out."""
        return self.subpatch_nodata_fraction(mask) < max_nodata

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def patch_score_average(score_map: torch.Tensor) -> float:
    """Mean of per-sub-patch probabilities: the reported realism vote."""
    if score_map.numel() == 0:
        raise InvalidInput("cannot average an empty score map")
    return float(torch.sigmoid(score_map).mean())
