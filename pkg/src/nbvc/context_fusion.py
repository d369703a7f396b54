"""Reference-feature propagation, multi-scale temporal context mining, and
the complementary weighting used to fuse the two directions' contexts.

The mining network is shared between directions: one parameter set applied
once per reference. Fusion weights are predicted per stage from the current
intermediate feature; the backward weight is the exact complement of the
forward weight.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ShapeMismatchError
from .layers import ResidualBlock, conv3
from .motion_toolkit import downscale_flow_tensor, warp_tensor

WEIGHT_FLOOR = 2.0 ** -16


@dataclass
class TemporalContextPyramid:
    """Three context scales: (C_c, H, W), (2C_c, H/2, W/2), (4C_c, H/4, W/4)."""

    level0: torch.Tensor
    level1: torch.Tensor
    level2: torch.Tensor
    direction: str = ""

    def level(self, l):
        return (self.level0, self.level1, self.level2)[l]


class ContextMiner(nn.Module):
    """Builds a 3-level pyramid from a reference feature, warps each level
    with the matching downscaled decoded flow, and refines the result."""

    def __init__(self, feature_channels, context_channels):
        super().__init__()
        cc = context_channels
        self.level_in = nn.ModuleList([
            nn.Sequential(conv3(feature_channels, cc), ResidualBlock(cc)),
            nn.Sequential(conv3(cc, 2 * cc, stride=2), ResidualBlock(2 * cc)),
            nn.Sequential(conv3(2 * cc, 4 * cc, stride=2), ResidualBlock(4 * cc)),
        ])
        # Zero-initialized refinement: with zero flow the pyramid passes through.
        self.refine = nn.ModuleList([
            ResidualBlock(cc, zero_init_last=True),
            ResidualBlock(2 * cc, zero_init_last=True),
            ResidualBlock(4 * cc, zero_init_last=True),
        ])

    def build_pyramid(self, reference_feature: torch.Tensor):
        l0 = self.level_in[0](reference_feature)
        l1 = self.level_in[1](l0)
        l2 = self.level_in[2](l1)
        return l0, l1, l2

    def forward(self, reference_feature: torch.Tensor, flow: torch.Tensor,
                direction="") -> TemporalContextPyramid:
        if reference_feature.shape[-2:] != flow.shape[-2:]:
            raise ShapeMismatchError("context mining needs full-resolution flow")
        levels = self.build_pyramid(reference_feature)
        out = []
        for l, feat in enumerate(levels):
            scaled = downscale_flow_tensor(flow, 2 ** l)
            out.append(self.refine[l](warp_tensor(feat, scaled)))
        return TemporalContextPyramid(*out, direction=direction)


class FusionWeightPredictor(nn.Module):
    """One conv plus a logistic squash; returns (w_fwd, w_back = 1 - w_fwd).

    Outputs are clamped a hair inside (0,1) so both weights stay strictly
    interior and complementary for any finite input.
    """

    def __init__(self, in_channels, context_channels):
        super().__init__()
        self.conv = conv3(in_channels, context_channels)

    def forward(self, feature: torch.Tensor):
        w_fwd = torch.sigmoid(self.conv(feature)).clamp(WEIGHT_FLOOR, 1.0 - WEIGHT_FLOOR)
        return w_fwd, 1.0 - w_fwd


def fuse_weighted_contexts(feature, ctx_fwd, ctx_back, w_fwd, w_back):
    """Concatenate the feature with both reweighted contexts."""
    for name, t in (("forward context", ctx_fwd), ("backward context", ctx_back)):
        if t.shape[-2:] != feature.shape[-2:]:
            raise ShapeMismatchError(f"{name} spatial size {tuple(t.shape[-2:])} "
                                     f"!= feature {tuple(feature.shape[-2:])}")
    return torch.cat([feature, w_fwd * ctx_fwd, w_back * ctx_back], dim=1)


class IntraFeatureExtractor(nn.Module):
    """Derives a reference feature from a decoded intra frame."""

    def __init__(self, feature_channels):
        super().__init__()
        self.net = nn.Sequential(
            conv3(3, feature_channels), nn.GELU(),
            ResidualBlock(feature_channels),
        )

    def forward(self, frame: torch.Tensor) -> torch.Tensor:
        return self.net(frame)
