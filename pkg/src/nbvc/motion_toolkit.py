"""Bi-directional flow estimation, midpoint motion prediction, motion-vector
differences, and warping.

Flow convention: a field attached to (src, dst) samples dst at
(x + flow_x, y + flow_y) to approximate src; displacements are in pixels at
the field's own resolution.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import FlowProviderError, ShapeMismatchError
from .layers import conv3


@dataclass
class MotionField:
    """(2, H, W) displacement field; channel 0 horizontal, 1 vertical."""

    flow: torch.Tensor
    tag: str = ""

    def __post_init__(self):
        if self.flow.dim() != 3 or self.flow.shape[0] != 2:
            raise ShapeMismatchError(f"flow must be (2, H, W), got {tuple(self.flow.shape)}")


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: {tuple(a.shape)} vs {tuple(b.shape)}")


def predict_bidirectional_mv(v_back_to_fwd: MotionField, v_fwd_to_back: MotionField):
    """Midpoint predictions: half of each cross-reference flow."""
    _check_same_shape(v_back_to_fwd.flow, v_fwd_to_back.flow, "cross-reference flows")
    return (MotionField(v_back_to_fwd.flow / 2, tag="pred_fwd"),
            MotionField(v_fwd_to_back.flow / 2, tag="pred_back"))


def mvd(v: MotionField, pred: MotionField) -> MotionField:
    _check_same_shape(v.flow, pred.flow, "mvd inputs")
    return MotionField(v.flow - pred.flow, tag="mvd")


def reconstruct_mv(residual: MotionField, pred: MotionField) -> MotionField:
    _check_same_shape(residual.flow, pred.flow, "reconstruct inputs")
    return MotionField(residual.flow + pred.flow, tag="recon")


def warp_tensor(feature: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinear warp of (B, C, H, W) by (B, 2, H, W); border samples clamp.

    Implemented with explicit gathers so integer flows sample exactly and
    gradients flow to both inputs.
    """
    if feature.shape[-2:] != flow.shape[-2:] or feature.shape[0] != flow.shape[0]:
        raise ShapeMismatchError(
            f"warp shapes: feature {tuple(feature.shape)} vs flow {tuple(flow.shape)}"
        )
    b, c, h, w = feature.shape
    dtype = feature.dtype
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype, device=feature.device),
        torch.arange(w, dtype=dtype, device=feature.device),
        indexing="ij",
    )
    sx = (xs.unsqueeze(0) + flow[:, 0]).clamp(0, w - 1)
    sy = (ys.unsqueeze(0) + flow[:, 1]).clamp(0, h - 1)
    x0 = sx.floor()
    y0 = sy.floor()
    wx = (sx - x0).unsqueeze(1)
    wy = (sy - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = feature.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return torch.gather(flat, 2, idx).reshape(b, c, h, w)

    f00 = gather(y0, x0)
    f01 = gather(y0, x1)
    f10 = gather(y1, x0)
    f11 = gather(y1, x1)
    top = f00 * (1 - wx) + f01 * wx
    bot = f10 * (1 - wx) + f11 * wx
    return top * (1 - wy) + bot * wy


def warp(feature, flow: MotionField):
    """Warp a (C, H, W) tensor (or FeatureMap-like .data) by a MotionField."""
    data = feature.data if hasattr(feature, "data") and not torch.is_tensor(feature) else feature
    return warp_tensor(data.unsqueeze(0), flow.flow.unsqueeze(0)).squeeze(0)


def downscale_flow(flow: MotionField, factor: int) -> MotionField:
    if factor == 1:
        return flow
    if factor not in (2, 4):
        raise ShapeMismatchError(f"downscale factor must be 1, 2 or 4, got {factor}")
    _, h, w = flow.flow.shape
    if h % factor or w % factor:
        raise ShapeMismatchError(f"({h}, {w}) not divisible by {factor}")
    pooled = F.avg_pool2d(flow.flow.unsqueeze(0), factor).squeeze(0) / factor
    return MotionField(pooled, tag=flow.tag)


def downscale_flow_tensor(flow: torch.Tensor, factor: int) -> torch.Tensor:
    if factor == 1:
        return flow
    return F.avg_pool2d(flow, factor) / factor


class PyramidFlowEstimator(nn.Module):
    """Small coarse-to-fine flow network, trained jointly with the codec.

    Each level refines an upsampled coarser flow from the concatenation of
    the source frame, the warped destination frame, and the flow itself.
    The last conv of every level is zero-initialized so the untrained
    estimator outputs zero flow.
    """

    def __init__(self, levels=4, width=16):
        super().__init__()
        self.levels = levels
        blocks = []
        for _ in range(levels):
            last = conv3(width, 2)
            nn.init.zeros_(last.weight)
            nn.init.zeros_(last.bias)
            blocks.append(nn.Sequential(
                conv3(8, width), nn.GELU(),
                conv3(width, width), nn.GELU(),
                last,
            ))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        if src.shape != dst.shape:
            raise ShapeMismatchError("flow estimation needs equal-size frames")
        srcs, dsts = [src], [dst]
        for _ in range(self.levels - 1):
            srcs.append(F.avg_pool2d(srcs[-1], 2))
            dsts.append(F.avg_pool2d(dsts[-1], 2))
        flow = torch.zeros_like(srcs[-1][:, :2])
        for level in range(self.levels - 1, -1, -1):
            if flow.shape[-2:] != srcs[level].shape[-2:]:
                flow = F.interpolate(flow, size=srcs[level].shape[-2:],
                                     mode="bilinear", align_corners=False) * 2
            warped = warp_tensor(dsts[level], flow)
            flow = flow + self.blocks[level](torch.cat([srcs[level], warped, flow], dim=1))
        return flow


class FileFlowProvider:
    """Serves precomputed flows stored one file per (src, dst) frame pair.

    Record layout (little-endian): u32 H, u32 W, then H*W float32 horizontal
    components followed by H*W vertical components. Files are named
    ``flow_<src>_<dst>.bin`` with zero-padded five-digit indices.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def path_for(self, src_index, dst_index):
        return self.directory / f"flow_{src_index:05d}_{dst_index:05d}.bin"

    def estimate(self, src, dst, src_index=None, dst_index=None):
        path = self.path_for(src_index, dst_index)
        if not path.exists():
            raise FlowProviderError(f"missing precomputed flow file {path}")
        return read_flow_file(path).unsqueeze(0).to(src.dtype)


class ZeroFlowProvider:
    def estimate(self, src, dst, src_index=None, dst_index=None):
        return torch.zeros(src.shape[0], 2, src.shape[2], src.shape[3],
                           dtype=src.dtype, device=src.device)


def write_flow_file(path, flow: torch.Tensor):
    """flow: (2, H, W) float tensor."""
    f = flow.detach().cpu().float()
    _, h, w = f.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", h, w))
        fh.write(f[0].numpy().astype("<f4").tobytes())
        fh.write(f[1].numpy().astype("<f4").tobytes())


def read_flow_file(path) -> torch.Tensor:
    import numpy as np

    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise FlowProviderError(f"truncated flow file {path}")
        h, w = struct.unpack("<II", head)
        raw = fh.read(2 * h * w * 4)
        if len(raw) < 2 * h * w * 4:
            raise FlowProviderError(f"truncated flow payload in {path}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(2, h, w)
    return torch.from_numpy(arr.copy())
