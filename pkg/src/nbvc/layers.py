"""Reusable network blocks: conv stacks, linear cross-attention, quantization."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core_types import GLOBAL_STEP_INIT, NUM_RATE_POINTS

STEP_FLOOR = 1e-4


class _RoundHalfAwaySTE(torch.autograd.Function):
    """Round half away from zero; identity gradient (straight-through)."""

    @staticmethod
    def forward(ctx, x):
        return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)

    @staticmethod
    def backward(ctx, grad):
        return grad


def round_ste(x):
    return _RoundHalfAwaySTE.apply(x)


def round_half_away(x):
    with torch.no_grad():
        return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)


class QuantStepLadder(nn.Module):
    """Learnable quantization steps: one global scalar per rate point times a
    channel-wise vector. Clamped strictly positive at use."""

    def __init__(self, channels):
        super().__init__()
        self.global_steps = nn.Parameter(torch.tensor(GLOBAL_STEP_INIT, dtype=torch.float32))
        self.channel_steps = nn.Parameter(torch.ones(channels))

    def effective(self, rate_index: int) -> torch.Tensor:
        """(C,) effective step for the rate point."""
        g = self.global_steps[rate_index].clamp(min=STEP_FLOOR)
        ch = self.channel_steps.clamp(min=STEP_FLOOR)
        return g * ch


def quantize_latent(latent, enc_step, training):
    """Symbols k = round(latent / enc_step); straight-through when training."""
    scaled = latent / enc_step.view(1, -1, 1, 1)
    return round_ste(scaled) if training else round_half_away(scaled)


def dequantize_latent(symbols, dec_step):
    return symbols * dec_step.view(1, -1, 1, 1)


def conv3(in_ch, out_ch, stride=1):
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)


class ResidualBlock(nn.Module):
    def __init__(self, channels, zero_init_last=False):
        super().__init__()
        self.conv1 = conv3(channels, channels)
        self.conv2 = conv3(channels, channels)
        if zero_init_last:
            nn.init.zeros_(self.conv2.weight)
            nn.init.zeros_(self.conv2.bias)

    def forward(self, x):
        return x + self.conv2(F.gelu(self.conv1(x)))


class DepthwiseConvBlock(nn.Module):
    """3x3 depthwise conv followed by a pointwise projection."""

    def __init__(self, in_ch, out_ch, zero_init_last=False):
        super().__init__()
        self.dw = nn.Conv2d(in_ch, in_ch, 3, padding=1, groups=in_ch)
        self.pw = nn.Conv2d(in_ch, out_ch, 1)
        if zero_init_last:
            nn.init.zeros_(self.pw.weight)
            nn.init.zeros_(self.pw.bias)

    def forward(self, x):
        return self.pw(F.gelu(self.dw(x)))


class DownBlock(nn.Module):
    """Stride-2 conv followed by a residual block."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.down = conv3(in_ch, out_ch, stride=2)
        self.res = ResidualBlock(out_ch)

    def forward(self, x):
        return self.res(self.down(x))


class UpBlock(nn.Module):
    """Sub-pixel upsampling conv followed by a residual block."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch * 4, 3, padding=1)
        self.res = ResidualBlock(out_ch)

    def forward(self, x):
        return self.res(F.pixel_shuffle(self.conv(x), 2))


def linear_cross_attention(q, k, v):
    """Linear attention: keys softmaxed over spatial positions, queries over
    channels; global context (softmax(K) @ V^T)^T is applied to softmax(Q)."""
    b, c, h, w = q.shape
    qf = q.flatten(2).softmax(dim=1)
    kf = k.flatten(2).softmax(dim=2)
    vf = v.flatten(2)
    context = kf @ vf.transpose(1, 2)
    out = context.transpose(1, 2) @ qf
    return out.reshape(b, vf.shape[1], h, w)
