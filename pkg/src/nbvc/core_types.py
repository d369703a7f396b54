"""Shared value types and shape contracts: frames, feature maps, rate points.

All image-plane data lives in [0,1] float tensors shaped (3, H, W); conversion
to/from 8-bit happens only at ingestion and emission.
"""

from dataclasses import dataclass, field, replace

import torch
import torch.nn.functional as F

from .errors import CropError, IngestionError, ShapeMismatchError

MODEL_STRIDE = 64

# Lagrange multipliers for the four rate points. Rate index 0 is the
# highest-rate / highest-quality point (finest quantization step), index 3
# the lowest; the acceptance ladder (bpp falls, MSE rises with the index)
# fixes this orientation.
LAMBDA_TABLE = (85.0, 170.0, 380.0, 840.0)
NUM_RATE_POINTS = len(LAMBDA_TABLE)
# Global quantization-step initialization per rate index (finest first).
GLOBAL_STEP_INIT = (0.7, 1.0, 1.4, 2.0)


def lambda_for_rate_index(rate_index):
    """λ for a rate index; index 0 maps to the largest λ (best quality)."""
    validate_rate_index(rate_index)
    return LAMBDA_TABLE[NUM_RATE_POINTS - 1 - rate_index]


def validate_rate_index(rate_index):
    if not isinstance(rate_index, int) or not 0 <= rate_index < NUM_RATE_POINTS:
        raise ShapeMismatchError(
            f"rate index must be an integer in [0, {NUM_RATE_POINTS}), got {rate_index!r}"
        )
    return rate_index


@dataclass
class Frame:
    """One RGB frame; pixels (3, H, W) float in [0,1].

    ``original_size`` records the pre-padding (H, W) so decode output can be
    cropped back; it is set at ingestion and preserved by padding.
    """

    pixels: torch.Tensor
    frame_index: int = 0
    bit_depth_origin: int = 8
    original_size: tuple = None

    def __post_init__(self):
        if self.pixels.dim() != 3 or self.pixels.shape[0] != 3:
            raise IngestionError(f"frame pixels must be (3, H, W), got {tuple(self.pixels.shape)}")
        if self.pixels.shape[1] < 1 or self.pixels.shape[2] < 1:
            raise IngestionError("degenerate zero-size frame")

    @property
    def height(self):
        return self.pixels.shape[1]

    @property
    def width(self):
        return self.pixels.shape[2]


@dataclass
class FeatureMap:
    """Intermediate (C, H', W') feature at pyramid scale ``scale_level``.

    Spatial size at level l is (H / 2^l, W / 2^l) of the frame it derives from.
    """

    data: torch.Tensor
    scale_level: int = 0

    def __post_init__(self):
        if self.data.dim() != 3:
            raise ShapeMismatchError(f"feature map must be (C, H, W), got {tuple(self.data.shape)}")
        if self.scale_level not in (0, 1, 2):
            raise ShapeMismatchError(f"scale_level must be in {{0,1,2}}, got {self.scale_level}")


def assert_finite(tensor, what="tensor"):
    if not torch.isfinite(tensor).all():
        raise ShapeMismatchError(f"{what} contains non-finite values")
    return tensor


def padded_extent(size, stride):
    """Smallest multiple of ``stride`` that is >= size."""
    return ((size + stride - 1) // stride) * stride


def pad_to_stride(frame: Frame, stride: int = MODEL_STRIDE) -> Frame:
    """Replicate-pad a frame on the bottom/right to a multiple of ``stride``."""
    if stride < 1:
        raise ShapeMismatchError(f"stride must be >= 1, got {stride}")
    h, w = frame.height, frame.width
    original = frame.original_size or (h, w)
    ph, pw = padded_extent(h, stride), padded_extent(w, stride)
    if (ph, pw) == (h, w):
        return replace(frame, original_size=original)
    padded = F.pad(frame.pixels.unsqueeze(0), (0, pw - w, 0, ph - h), mode="replicate")
    return replace(frame, pixels=padded.squeeze(0), original_size=original)


def crop_to_original(frame: Frame) -> Frame:
    """Top-left crop back to the recorded pre-padding size."""
    if frame.original_size is None:
        raise CropError("frame has no recorded original size")
    oh, ow = frame.original_size
    if oh > frame.height or ow > frame.width:
        raise CropError(
            f"recorded original size {frame.original_size} exceeds current "
            f"({frame.height}, {frame.width})"
        )
    return replace(frame, pixels=frame.pixels[:, :oh, :ow].contiguous())


def clamp_frame_values(pixels: torch.Tensor) -> torch.Tensor:
    return pixels.clamp(0.0, 1.0)
