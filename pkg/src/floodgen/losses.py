"""Training objectives.

The adversarial value is kept in the textbook form

    L_adv = E[log D(real)] + E[log(1 - D(fake))]

computed stably from logits (log sigmoid(x) = -softplus(-x)), so the
discriminator total negates it. The generator minimizes the non-saturating
surrogate -E[log D(fake)] instead of maximizing log(1 - D(fake)).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import InvalidInput

# a sub-patch takes part in the adversarial loss unless at least this
# fraction of its receptive field is no-data
MAX_NODATA_FRACTION = 0.9


@dataclass
class LossWeights:
    lambda_adv: float = 0.001
    lambda_reg: float = 0.005
    lambda_rec: float = 1.0

    def __post_init__(self):
        if self.lambda_adv < 0 or self.lambda_reg < 0 or self.lambda_rec < 0:
            raise InvalidInput("loss weights must be >= 0")


def _select_valid(logits: torch.Tensor, valid: torch.Tensor | None) -> torch.Tensor:
    if valid is None:
        return logits.reshape(-1)
    if valid.shape != logits.shape:
        raise InvalidInput(
            f"valid mask {tuple(valid.shape)} does not match score map {tuple(logits.shape)}"
        )
    kept = logits[valid]
    if kept.numel() == 0:
        raise InvalidInput("every sub-patch was dropped as no-data")
    return kept


def adversarial_loss(
    real_logits: torch.Tensor,
    fake_logits: torch.Tensor,
    valid: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Returns (L_adv, generator surrogate).

    L_adv = E[log sigma(real)] + E[log(1 - sigma(fake))], averaged over
    batch and sub-patches; the surrogate is -E[log sigma(fake)]. `valid`
    masks out sub-patches dominated by no-data on both terms.
    """
    real = _select_valid(real_logits, valid)
    fake = _select_valid(fake_logits, valid)
    log_d_real = -F.softplus(-real)  # log sigma(x)
    log_one_minus_d_fake = -F.softplus(fake)  # log(1 - sigma(x))
    l_adv = log_d_real.mean() + log_one_minus_d_fake.mean()
    l_adv_g = F.softplus(-fake).mean()  # -log sigma(fake)
    return l_adv, l_adv_g


def rainfall_reg_loss(estimate: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error across the 12 hyetograph entries (and the batch)."""
    if estimate.shape[-1] != 12 or target.shape[-1] != 12:
        raise InvalidInput(
            f"rainfall vectors must have 12 entries, got {estimate.shape} vs {target.shape}"
        )
    if estimate.shape != target.shape:
        raise InvalidInput(f"shape mismatch: {estimate.shape} vs {target.shape}")
    return (estimate - target).abs().mean()


def reconstruction_loss(
    predicted: torch.Tensor,
    truth: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """L1 error over effective pixels only.

    `mask` uses the raster convention (+1 effective / -1 no-data) and
    broadcasts against the depth tensors; None means all pixels count.
    """
    if predicted.shape != truth.shape:
        raise InvalidInput(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    residual = (predicted - truth).abs()
    if mask is None:
        return residual.mean()
    effective = (mask > 0).expand_as(residual)
    count = effective.sum()
    if count == 0:
        raise InvalidInput("no effective pixels under the mask")
    return residual[effective].sum() / count


def total_d_loss(l_adv, l_reg_real, weights: LossWeights):
    """Discriminator objective: -lambda_adv * L_adv + lambda_reg * L_reg^real."""
    return -weights.lambda_adv * l_adv + weights.lambda_reg * l_reg_real


def total_g_loss(l_adv_g, l_reg_fake, l_rec, weights: LossWeights):
    """Generator objective: lambda_adv * L_adv^G + lambda_reg * L_reg^fake + lambda_rec * L_rec."""
    return (
        weights.lambda_adv * l_adv_g
        + weights.lambda_reg * l_reg_fake
        + weights.lambda_rec * l_rec
    )
