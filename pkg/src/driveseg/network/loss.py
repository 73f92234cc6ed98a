from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..ordinal import PROB_FLOOR

LOG_FLOOR = math.log(PROB_FLOOR)


def kl_batch_loss(logits: torch.Tensor, targets: torch.Tensor, void: torch.Tensor,
                  weights: torch.Tensor | None = None) -> torch.Tensor:
    """Torch twin of :func:`driveseg.ordinal.batch_loss` on raw scores.

    logits, targets: (B, K, H, W); void: (B, H, W) bool; weights: (B, H, W).
    """
    keep = ~void
    n = keep.sum()
    if int(n) == 0:
        raise ValueError("batch has no non-void pixels")
    logp = F.log_softmax(logits, dim=1).clamp_min(LOG_FLOOR)
    per_pixel = (torch.xlogy(targets, targets) - targets * logp).sum(dim=1)
    if weights is not None:
        per_pixel = per_pixel * weights
    return per_pixel[keep].sum() / n


def kl_loss_sums(logits, targets, void, weights=None) -> tuple[float, int]:
    """(summed loss, non-void count) for pooling a loss across many batches."""
    keep = ~void
    logp = F.log_softmax(logits, dim=1).clamp_min(LOG_FLOOR)
    per_pixel = (torch.xlogy(targets, targets) - targets * logp).sum(dim=1)
    if weights is not None:
        per_pixel = per_pixel * weights
    return float(per_pixel[keep].double().sum()), int(keep.sum())
