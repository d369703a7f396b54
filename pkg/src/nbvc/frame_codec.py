"""Contextual encoder-decoder with selective temporal fusion, plus the
pluggable intra codecs (lossless 8-bit for tests, tiny learned auto-encoder
for rate-distortion experiments)."""

import struct
import zlib

import numpy as np
import torch
import torch.nn as nn

from .coder.range_coder import StreamDecoder, StreamEncoder
from .context_fusion import (FusionWeightPredictor, TemporalContextPyramid,
                             fuse_weighted_contexts)
from .errors import ContainerFormatError, ShapeMismatchError
from .layers import (DownBlock, QuantStepLadder, ResidualBlock, UpBlock,
                     conv3, round_ste)
from .motion_entropy import FactorizedLaplacePrior

INTRA_MODE_RAW = 0
INTRA_MODE_LEARNED = 1


class ContextQuantSteps(nn.Module):
    """Single-branch encoder/decoder step ladders for the contextual latent."""

    def __init__(self, channels):
        super().__init__()
        self.enc = QuantStepLadder(channels)
        self.dec = QuantStepLadder(channels)

    def steps(self, rate_index):
        return self.enc.effective(rate_index), self.dec.effective(rate_index)


class ContextualEncoder(nn.Module):
    """Four downsampling stages; contexts fuse at their native scale just
    before the downsample that leaves it."""

    def __init__(self, widths, latent_channels, context_channels):
        super().__init__()
        w0, w1, w2, w3 = widths
        cc = context_channels
        self.stem = conv3(3, w0)
        self.weights = nn.ModuleList([
            FusionWeightPredictor(w0, cc),
            FusionWeightPredictor(w1, 2 * cc),
            FusionWeightPredictor(w2, 4 * cc),
        ])
        self.down = nn.ModuleList([
            DownBlock(w0 + 2 * cc, w1),
            DownBlock(w1 + 4 * cc, w2),
            DownBlock(w2 + 8 * cc, w3),
            DownBlock(w3, latent_channels),
        ])

    def forward(self, frame, ctx_fwd: TemporalContextPyramid,
                ctx_back: TemporalContextPyramid, use_weighting=True):
        x = self.stem(frame)
        for level in range(3):
            cf, cb = ctx_fwd.level(level), ctx_back.level(level)
            if use_weighting:
                w_f, w_b = self.weights[level](x)
            else:
                w_f = torch.full_like(cf, 0.5)
                w_b = w_f
            x = self.down[level](fuse_weighted_contexts(x, cf, cb, w_f, w_b))
        return self.down[3](x)


class ContextualDecoder(nn.Module):
    """Mirror of the encoder: contexts fuse right after reaching their scale;
    emits the reconstruction and the reference feature for later frames."""

    def __init__(self, widths, latent_channels, context_channels, feature_channels):
        super().__init__()
        w0, w1, w2, w3 = widths
        cc = context_channels
        self.up = nn.ModuleList([
            UpBlock(latent_channels, w3),
            UpBlock(w3, w2),
            UpBlock(w2, w1),
            UpBlock(w1, w0),
        ])
        self.weights = nn.ModuleList([
            FusionWeightPredictor(w2, 4 * cc),
            FusionWeightPredictor(w1, 2 * cc),
            FusionWeightPredictor(w0, cc),
        ])
        self.merge = nn.ModuleList([
            nn.Sequential(conv3(w2 + 8 * cc, w2), ResidualBlock(w2)),
            nn.Sequential(conv3(w1 + 4 * cc, w1), ResidualBlock(w1)),
            nn.Sequential(conv3(w0 + 2 * cc, feature_channels),
                          ResidualBlock(feature_channels)),
        ])
        self.head = conv3(feature_channels, 3)

    def _fuse(self, i, level, x, ctx_fwd, ctx_back, use_weighting):
        cf, cb = ctx_fwd.level(level), ctx_back.level(level)
        if use_weighting:
            w_f, w_b = self.weights[i](x)
        else:
            w_f = torch.full_like(cf, 0.5)
            w_b = w_f
        return self.merge[i](fuse_weighted_contexts(x, cf, cb, w_f, w_b))

    def forward(self, latent, ctx_fwd: TemporalContextPyramid,
                ctx_back: TemporalContextPyramid, use_weighting=True):
        x = self.up[0](latent)
        x = self.up[1](x)
        x = self._fuse(0, 2, x, ctx_fwd, ctx_back, use_weighting)
        x = self.up[2](x)
        x = self._fuse(1, 1, x, ctx_fwd, ctx_back, use_weighting)
        x = self.up[3](x)
        feature = self._fuse(2, 0, x, ctx_fwd, ctx_back, use_weighting)
        frame = self.head(feature).clamp(0.0, 1.0)
        return frame, feature


class RawIntraCodec(nn.Module):
    """Lossless 8-bit intra payload: zlib over raw RGB bytes of the unpadded
    area. Both sides reconstruct the identical rounded frame."""

    def encode(self, padded_frame: torch.Tensor, original_size, rate_index=0) -> bytes:
        oh, ow = original_size
        crop = padded_frame[:, :oh, :ow]
        rgb8 = (crop.detach().cpu().clamp(0, 1) * 255).round().to(torch.uint8)
        raw = rgb8.numpy().tobytes()
        return struct.pack("<BHH", INTRA_MODE_RAW, oh, ow) + zlib.compress(raw, 6)

    def decode(self, payload: bytes, padded_size, rate_index=0) -> torch.Tensor:
        mode, oh, ow = struct.unpack_from("<BHH", payload, 0)
        if mode != INTRA_MODE_RAW:
            raise ContainerFormatError(f"intra chunk mode {mode} != raw")
        raw = zlib.decompress(payload[5:])
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(3, oh, ow)
        frame = torch.from_numpy(arr.copy()).float() / 255.0
        ph, pw = padded_size
        out = torch.nn.functional.pad(
            frame.unsqueeze(0), (0, pw - ow, 0, ph - oh), mode="replicate")
        return out.squeeze(0)


class LearnedIntraCodec(nn.Module):
    """Tiny learned image auto-encoder with a factorized latent prior and its
    own per-rate quantization ladder, so intra quality follows the rate point."""

    def __init__(self, latent_channels=64, width=48):
        super().__init__()
        w = width
        self.encoder = nn.Sequential(
            DownBlock(3, w), DownBlock(w, w), DownBlock(w, w),
            DownBlock(w, latent_channels),
        )
        self.decoder = nn.Sequential(
            UpBlock(latent_channels, w), UpBlock(w, w), UpBlock(w, w),
            UpBlock(w, w), conv3(w, 3),
        )
        self.prior = FactorizedLaplacePrior(latent_channels)
        self.steps = ContextQuantSteps(latent_channels)

    def forward_train(self, frame: torch.Tensor, rate_index=0):
        enc_step, dec_step = self.steps.steps(rate_index)
        sym = round_ste(self.encoder(frame) / enc_step.view(1, -1, 1, 1))
        recon = self.decoder(sym * dec_step.view(1, -1, 1, 1)).clamp(0.0, 1.0)
        return recon, self.prior.bits(sym)

    def encode(self, padded_frame: torch.Tensor, original_size, rate_index=0) -> bytes:
        enc_step, _ = self.steps.steps(rate_index)
        sym = torch.round(self.encoder(padded_frame.unsqueeze(0))
                          / enc_step.view(1, -1, 1, 1))
        tables, idx = self.prior.coder_tables(sym.shape)
        stream = StreamEncoder()
        stream.put(sym.detach().cpu().numpy().astype("int64").reshape(-1), tables, idx)
        b, c, h, w = sym.shape
        return struct.pack("<BHH", INTRA_MODE_LEARNED, h, w) + stream.finish()

    def decode(self, payload: bytes, padded_size, rate_index=0) -> torch.Tensor:
        mode, h, w = struct.unpack_from("<BHH", payload, 0)
        if mode != INTRA_MODE_LEARNED:
            raise ContainerFormatError(f"intra chunk mode {mode} != learned")
        _, dec_step = self.steps.steps(rate_index)
        channels = self.prior.loc.shape[0]
        shape = (1, channels, h, w)
        tables, idx = self.prior.coder_tables(shape)
        stream = StreamDecoder(payload[5:])
        sym = stream.take(tables, idx)
        stream.finish()
        sym = torch.from_numpy(sym.reshape(shape).copy()).to(self.prior.loc.dtype)
        latent = sym * dec_step.view(1, -1, 1, 1)
        return self.decoder(latent).squeeze(0).clamp(0.0, 1.0)
