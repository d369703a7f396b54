"""Rate-distortion loss and training configuration."""

from dataclasses import dataclass, field

import torch

from ..core_types import LAMBDA_TABLE
from ..errors import ShapeMismatchError, TrainingDivergedError

STAGES = ("motion-warmup", "single-frame-e2e", "multi-rate", "cascaded")


@dataclass
class TrainingConfig:
    lambda_table: tuple = LAMBDA_TABLE
    stage: str = "single-frame-e2e"
    sequence_length: int = 3
    batch_size: int = 1
    steps: int = 2000
    crop_size: tuple = None          # (H, W), multiples of 64; None = full frames
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    grad_clip_norm: float = 1.0
    hierarchy_weights: tuple = (1.0,)  # indexed by GOP level; last value repeats
    seed: int = 0

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.lambda_table, self.lambda_table[1:])):
            raise ShapeMismatchError("lambda table must be strictly increasing")
        if self.sequence_length not in (3, 5, 7):
            raise ShapeMismatchError("sequence length must be 3, 5 or 7")
        if self.crop_size is not None and any(s % 64 for s in self.crop_size):
            raise ShapeMismatchError("crop size must be a multiple of 64")
        if self.stage not in STAGES:
            raise ShapeMismatchError(f"unknown stage {self.stage!r}")

    def level_weight(self, level: int) -> float:
        if level < len(self.hierarchy_weights):
            return self.hierarchy_weights[level]
        return self.hierarchy_weights[-1]


def rd_loss(x: torch.Tensor, x_hat: torch.Tensor, total_bits, lam: float) -> torch.Tensor:
    """lambda * MSE + bits per pixel, over the (padded) frame area."""
    if x.shape != x_hat.shape:
        raise ShapeMismatchError("rd_loss needs matching shapes")
    h, w = x.shape[-2:]
    pixels = x.shape[0] * h * w if x.dim() == 4 else h * w
    mse = torch.mean((x - x_hat) ** 2)
    return lam * mse + total_bits / pixels


def guard_finite(loss: torch.Tensor, step: int):
    if not torch.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss at step {step}")
    return loss
