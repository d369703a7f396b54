"""Dual-branch motion auto-encoder with cross-direction interaction blocks
and per-direction, per-side adaptive quantization steps."""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ShapeMismatchError
from .layers import (DepthwiseConvBlock, DownBlock, QuantStepLadder, UpBlock,
                     conv3, dequantize_latent, linear_cross_attention,
                     quantize_latent)


@dataclass
class MotionLatent:
    data: torch.Tensor
    direction: str  # "forward" | "backward"
    quantized: bool = False


class MotionInteraction(nn.Module):
    """Exchange features between the two motion branches.

    Each direction projects (Q, K, V); linear attention reads the other
    direction's (K, V) with this direction's Q, a learned gate screens the
    result against Q, and a zero-initialized projection adds it back onto
    the branch, so the block starts as an exact identity.
    """

    def __init__(self, channels, gate="sigmoid"):
        super().__init__()
        if gate not in ("sigmoid", "softmax"):
            raise ShapeMismatchError(f"unknown gate variant {gate!r}")
        self.gate = gate
        self.qkv_fwd = DepthwiseConvBlock(channels, 3 * channels)
        self.qkv_back = DepthwiseConvBlock(channels, 3 * channels)
        self.screen_fwd = DepthwiseConvBlock(2 * channels, channels)
        self.screen_back = DepthwiseConvBlock(2 * channels, channels)
        self.project_fwd = DepthwiseConvBlock(2 * channels, channels, zero_init_last=True)
        self.project_back = DepthwiseConvBlock(2 * channels, channels, zero_init_last=True)

    def _gate(self, x):
        if self.gate == "sigmoid":
            return torch.sigmoid(x)
        return torch.softmax(x, dim=1)

    def forward(self, feat_fwd, feat_back):
        if feat_fwd.shape != feat_back.shape:
            raise ShapeMismatchError(
                f"interaction inputs differ: {tuple(feat_fwd.shape)} vs {tuple(feat_back.shape)}"
            )
        q_f, k_f, v_f = self.qkv_fwd(feat_fwd).chunk(3, dim=1)
        q_b, k_b, v_b = self.qkv_back(feat_back).chunk(3, dim=1)
        cross_f = linear_cross_attention(q_f, k_b, v_b)
        cross_b = linear_cross_attention(q_b, k_f, v_f)
        screened_f = cross_f * self._gate(self.screen_fwd(torch.cat([cross_f, q_f], dim=1)))
        screened_b = cross_b * self._gate(self.screen_back(torch.cat([cross_b, q_b], dim=1)))
        out_f = feat_fwd + self.project_fwd(torch.cat([screened_f, q_f], dim=1))
        out_b = feat_back + self.project_back(torch.cat([screened_b, q_b], dim=1))
        return out_f, out_b


class MotionQuantSteps(nn.Module):
    """Four independent step ladders: (forward|backward) x (encode|decode)."""

    def __init__(self, channels):
        super().__init__()
        self.fwd_enc = QuantStepLadder(channels)
        self.fwd_dec = QuantStepLadder(channels)
        self.back_enc = QuantStepLadder(channels)
        self.back_dec = QuantStepLadder(channels)

    def steps(self, rate_index, shared=False):
        """((enc_f, dec_f), (enc_b, dec_b)); ``shared`` ties backward to forward."""
        enc_f = self.fwd_enc.effective(rate_index)
        dec_f = self.fwd_dec.effective(rate_index)
        if shared:
            return (enc_f, dec_f), (enc_f, dec_f)
        return (enc_f, dec_f), (self.back_enc.effective(rate_index),
                                self.back_dec.effective(rate_index))


class _Branch(nn.Module):
    def __init__(self, widths, latent_channels, decode=False):
        super().__init__()
        w1, w2, w3 = widths
        if decode:
            self.stages = nn.ModuleList([
                UpBlock(latent_channels, w3),
                UpBlock(w3, w2),
                UpBlock(w2, w1),
                UpBlock(w1, w1),
            ])
            self.head = conv3(w1, 2)
        else:
            self.stages = nn.ModuleList([
                DownBlock(2, w1),
                DownBlock(w1, w2),
                DownBlock(w2, w3),
                DownBlock(w3, latent_channels),
            ])
            self.head = None


class MotionAutoEncoder(nn.Module):
    """Two unshared 4-stage branches with interaction blocks after encoder
    stages 2 and 4, mirrored in the decoder."""

    def __init__(self, latent_channels=64, widths=(64, 64, 96), gate="sigmoid",
                 enable_interaction=True):
        super().__init__()
        self.latent_channels = latent_channels
        self.enable_interaction = enable_interaction
        self.enc_fwd = _Branch(widths, latent_channels, decode=False)
        self.enc_back = _Branch(widths, latent_channels, decode=False)
        self.dec_fwd = _Branch(widths, latent_channels, decode=True)
        self.dec_back = _Branch(widths, latent_channels, decode=True)
        self.enc_mix_mid = MotionInteraction(widths[1], gate)
        self.enc_mix_late = MotionInteraction(latent_channels, gate)
        self.dec_mix_early = MotionInteraction(latent_channels, gate)
        self.dec_mix_mid = MotionInteraction(widths[1], gate)

    def encode(self, mvd_fwd: torch.Tensor, mvd_back: torch.Tensor):
        """(B, 2, H, W) MVDs -> two (B, C, H/16, W/16) latents."""
        if mvd_fwd.shape != mvd_back.shape:
            raise ShapeMismatchError("MVD shapes differ")
        f, b = mvd_fwd, mvd_back
        f = self.enc_fwd.stages[0](f)
        b = self.enc_back.stages[0](b)
        f = self.enc_fwd.stages[1](f)
        b = self.enc_back.stages[1](b)
        if self.enable_interaction:
            f, b = self.enc_mix_mid(f, b)
        f = self.enc_fwd.stages[2](f)
        b = self.enc_back.stages[2](b)
        f = self.enc_fwd.stages[3](f)
        b = self.enc_back.stages[3](b)
        if self.enable_interaction:
            f, b = self.enc_mix_late(f, b)
        return f, b

    def decode(self, latent_fwd: torch.Tensor, latent_back: torch.Tensor):
        f, b = latent_fwd, latent_back
        if self.enable_interaction:
            f, b = self.dec_mix_early(f, b)
        f = self.dec_fwd.stages[0](f)
        b = self.dec_back.stages[0](b)
        f = self.dec_fwd.stages[1](f)
        b = self.dec_back.stages[1](b)
        if self.enable_interaction:
            f, b = self.dec_mix_mid(f, b)
        f = self.dec_fwd.stages[2](f)
        b = self.dec_back.stages[2](b)
        f = self.dec_fwd.stages[3](f)
        b = self.dec_back.stages[3](b)
        return self.dec_fwd.head(f), self.dec_back.head(b)


__all__ = [
    "MotionLatent", "MotionInteraction", "MotionQuantSteps", "MotionAutoEncoder",
    "quantize_latent", "dequantize_latent",
]
