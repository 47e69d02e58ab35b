import torch
import torch.nn.functional as F

from ..utils.errors import DataError


def _check_shapes(logits: torch.Tensor, target: torch.Tensor):
    if logits.shape != target.shape:
        raise DataError(f"mask logits {tuple(logits.shape)} and target {tuple(target.shape)} differ in shape")


def dice_loss(logits: torch.Tensor, target: torch.Tensor, eps: float = 1.0) -> torch.Tensor:
    """1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), p = sigmoid(logits)"""
    _check_shapes(logits, target)
    p = torch.sigmoid(logits).flatten()
    t = target.to(p.dtype).flatten()
    return 1 - (2 * (p * t).sum() + eps) / (p.sum() + t.sum() + eps)


def bce_mask_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel binary cross entropy on logits"""
    _check_shapes(logits, target)
    return F.binary_cross_entropy_with_logits(logits, target.to(logits.dtype), reduction="mean")
