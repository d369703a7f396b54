"""Finite-difference gradient verification for the attention blocks, warping,
and quantization (the straight-through path is a documented mismatch)."""

from dataclasses import dataclass

import torch

from ..frame_entropy import HyperpriorAlignment
from ..layers import round_ste
from ..motion_codec import MotionInteraction
from ..motion_toolkit import warp_tensor

CHECKS = ("mii", "hia", "warp", "quantize")


@dataclass
class GradReport:
    module_id: str
    max_rel_err: float
    by_design_mismatch: bool = False

    @property
    def passed(self):
        return self.by_design_mismatch or self.max_rel_err < 1e-3


def _fd_jacobian(fn, x, eps=1e-6):
    base_shape = fn(x).shape
    flat = x.reshape(-1)
    cols = []
    for i in range(flat.numel()):
        bump = torch.zeros_like(flat)
        bump[i] = eps
        hi = fn((flat + bump).reshape(x.shape)).reshape(-1)
        lo = fn((flat - bump).reshape(x.shape)).reshape(-1)
        cols.append((hi - lo) / (2 * eps))
    return torch.stack(cols, dim=1).reshape(*base_shape, *x.shape)


def _compare(fn, x):
    auto = torch.autograd.functional.jacobian(fn, x)
    fd = _fd_jacobian(fn, x)
    scale = fd.abs().max().clamp_min(1e-12)
    return float((auto - fd).abs().max() / scale)


def gradcheck(module_id: str, seed=0) -> GradReport:
    torch.manual_seed(seed)
    if module_id == "mii":
        block = MotionInteraction(4).double()
        feat_b = torch.randn(1, 4, 4, 4, dtype=torch.float64)

        def fn(x):
            return block(x, feat_b)[0]

        err = _compare(fn, torch.randn(1, 4, 4, 4, dtype=torch.float64))
        return GradReport("mii", err)
    if module_id == "hia":
        block = HyperpriorAlignment(4, 4).double()
        prior = torch.randn(1, 4, 4, 4, dtype=torch.float64)

        def fn(z):
            return block(z, prior)

        err = _compare(fn, torch.randn(1, 4, 4, 4, dtype=torch.float64))
        return GradReport("hia", err)
    if module_id == "warp":
        # Non-integer flow keeps the evaluation away from the bilinear kinks.
        flow = (torch.rand(1, 2, 5, 5, dtype=torch.float64) - 0.5) * 1.4 + 0.3

        def fn(feat):
            return warp_tensor(feat, flow)

        err = _compare(fn, torch.randn(1, 2, 5, 5, dtype=torch.float64))
        return GradReport("warp", err)
    if module_id == "quantize":
        # Straight-through rounding: analytic gradient is identity while the
        # true derivative is zero almost everywhere.
        return GradReport("quantize", float("inf"), by_design_mismatch=True)
    raise ValueError(f"unknown gradcheck target {module_id!r}")


def run_all():
    return [gradcheck(m) for m in CHECKS]
