"""Contextual entropy model: hyperprior, fused bi-directional temporal prior
with hyperprior-guided alignment, and 4-step segment-partitioned coding of
the contextual latent."""

import torch
import torch.nn as nn

from .coder.range_coder import StreamDecoder, StreamEncoder
from .coder.tables import build_laplace_cdf_batch
from .errors import ConditioningError, ShapeMismatchError
from .layers import (DepthwiseConvBlock, conv3, dequantize_latent,
                     linear_cross_attention, quantize_latent, round_ste)
from .motion_entropy import (FactorizedLaplacePrior, SegmentParamNet,
                             SegmentPartition)
from .probability import symbol_bits, symbol_bits_np

CONTEXT_SCHEDULE = (0, 1, 2, 3)


class HyperpriorAlignment(nn.Module):
    """Realigns the temporal prior by treating the hyper feature as a
    surrogate query for the not-yet-decoded latent.

    Q comes from the hyper feature; one shared block emits (K, V) from the
    prior. The output projection is zero-initialized, so the block starts as
    an identity on the prior.
    """

    def __init__(self, hyper_channels, prior_channels):
        super().__init__()
        self.query = DepthwiseConvBlock(hyper_channels, prior_channels)
        self.key_value = DepthwiseConvBlock(prior_channels, 2 * prior_channels)
        self.project = DepthwiseConvBlock(3 * prior_channels, prior_channels,
                                          zero_init_last=True)

    def forward(self, hyper_feat, prior):
        if hyper_feat.shape[-2:] != prior.shape[-2:]:
            raise ShapeMismatchError("alignment needs matching latent-resolution shapes")
        q = self.query(hyper_feat)
        kv = self.key_value(prior)
        k, v = kv.chunk(2, dim=1)
        aligned = linear_cross_attention(q, k, v)
        return prior + self.project(torch.cat([aligned, kv], dim=1))


class TemporalPriorBuilder(nn.Module):
    """Fuses both reference latents with the small-scale contexts into a
    latent-resolution prior; intra references contribute a learned constant
    embedding in place of a context latent."""

    def __init__(self, latent_channels, context_channels, prior_channels):
        super().__init__()
        self.intra_embedding = nn.Parameter(torch.zeros(latent_channels))
        cc4 = 4 * context_channels
        self.ctx_down = nn.Sequential(
            conv3(2 * cc4, cc4, stride=2), nn.GELU(), conv3(cc4, cc4, stride=2),
        )
        self.fuse = nn.Sequential(
            conv3(2 * latent_channels + cc4, prior_channels), nn.GELU(),
            conv3(prior_channels, prior_channels),
        )

    def reference_latent(self, latent, shape, device, dtype):
        if latent is not None:
            return latent
        b, c, h, w = shape
        return self.intra_embedding.view(1, -1, 1, 1).expand(b, c, h, w).to(
            device=device, dtype=dtype)

    def forward(self, ref_latent_fwd, ref_latent_back, ctx2_fwd, ctx2_back,
                latent_shape, device, dtype):
        yf = self.reference_latent(ref_latent_fwd, latent_shape, device, dtype)
        yb = self.reference_latent(ref_latent_back, latent_shape, device, dtype)
        ctx = self.ctx_down(torch.cat([ctx2_fwd, ctx2_back], dim=1))
        return self.fuse(torch.cat([yf, yb, ctx], dim=1))


class ContextEntropyModel(nn.Module):
    def __init__(self, latent_channels, context_channels, hyper_channels=64,
                 prior_channels=64, param_width=64, enable_alignment=True):
        super().__init__()
        self.latent_channels = latent_channels
        self.enable_alignment = enable_alignment
        self.partition = SegmentPartition(latent_channels)
        c, hc = latent_channels, hyper_channels
        self.hyper_enc = nn.Sequential(
            conv3(c, hc, stride=2), nn.GELU(), conv3(hc, hc, stride=2),
        )
        self.hyper_dec = nn.Sequential(
            nn.Conv2d(hc, hc * 4, 3, padding=1), nn.PixelShuffle(2), nn.GELU(),
            nn.Conv2d(hc, hc * 4, 3, padding=1), nn.PixelShuffle(2), nn.GELU(),
            conv3(hc, hc),
        )
        self.factorized = FactorizedLaplacePrior(hc)
        self.prior_builder = TemporalPriorBuilder(c, context_channels, prior_channels)
        self.alignment = HyperpriorAlignment(hc, prior_channels)
        in_ch = hc + prior_channels + (c + 2)
        self.param_nets = nn.ModuleDict({
            str(step): SegmentParamNet(in_ch, param_width, c)
            for step in CONTEXT_SCHEDULE
        })

    def refined_prior(self, hyper_feat, prior):
        if not self.enable_alignment:
            return prior
        return self.alignment(hyper_feat, prior)

    def estimate_segment_params(self, step, hyper_feat, refined_prior,
                                deq_latent, available):
        allowed = set(range(step))
        if not set(available) <= allowed:
            raise ConditioningError(
                f"segments {sorted(available)} exceed allowed {sorted(allowed)} "
                f"for context step {step}")
        comp = self.partition.composite(deq_latent, set(available))
        x = torch.cat([hyper_feat, refined_prior, comp], dim=1)
        return self.param_nets[str(step)](x)

    def bits_train(self, symbols, deq_latent, hyper_feat, refined_prior):
        masks = self.partition.masks(symbols.shape[-2], symbols.shape[-1],
                                     symbols.device, symbols.dtype)
        total = symbols.new_zeros(())
        for step in CONTEXT_SCHEDULE:
            mu, sigma = self.estimate_segment_params(
                step, hyper_feat, refined_prior, deq_latent, set(range(step)))
            total = total + (symbol_bits(symbols, mu, sigma) * masks[step].unsqueeze(0)).sum()
        return total

    def hyper_forward_train(self, raw_latent):
        z_sym = round_ste(self.hyper_enc(raw_latent))
        return z_sym, self.hyper_dec(z_sym), self.factorized.bits(z_sym)

    # ---- lossless coding -------------------------------------------------

    def _segment_positions(self, step, shape, device):
        mask = self.partition.masks(shape[-2], shape[-1], device)[step]
        return mask.reshape(-1).nonzero(as_tuple=False).squeeze(1)

    def encode_latent(self, raw_latent, steps, prior):
        """Returns (hyper_bytes, latent_bytes, deq_latent, estimated_bits)."""
        enc_step, dec_step = steps
        sym = quantize_latent(raw_latent, enc_step, training=False)
        deq = dequantize_latent(sym, dec_step)

        z_sym = torch.round(self.hyper_enc(raw_latent))
        hyper_feat = self.hyper_dec(z_sym)
        z_np = z_sym.detach().cpu().numpy().astype("int64")
        tables, idx = self.factorized.coder_tables(z_sym.shape)
        hyper_stream = StreamEncoder()
        hyper_stream.put(z_np.reshape(-1), tables, idx)
        hyper_bytes = hyper_stream.finish()
        est_bits = self.factorized.estimate_bits_np(z_np)

        refined = self.refined_prior(hyper_feat, prior)
        stream = StreamEncoder()
        revealed = torch.zeros_like(sym)
        for step in CONTEXT_SCHEDULE:
            mu, sigma = self.estimate_segment_params(
                step, hyper_feat, refined,
                dequantize_latent(revealed, dec_step), set(range(step)))
            pos = self._segment_positions(step, sym.shape, sym.device)
            flat = sym.reshape(-1)[pos]
            mu_v = mu.reshape(-1)[pos].detach().cpu().numpy()
            sigma_v = sigma.reshape(-1)[pos].detach().cpu().numpy()
            batch = build_laplace_cdf_batch(mu_v, sigma_v)
            sym_np = flat.detach().cpu().numpy().astype("int64")
            stream.put(sym_np, batch)
            est_bits += float(symbol_bits_np(sym_np, mu_v, sigma_v).sum())
            revealed.reshape(-1)[pos] = flat
        latent_bytes = stream.finish()
        if not torch.equal(revealed, sym):
            raise ShapeMismatchError("context segments did not cover the latent")
        return hyper_bytes, latent_bytes, deq, est_bits, sym

    def decode_latent(self, hyper_bytes, latent_bytes, steps, prior, latent_shape):
        _, dec_step = steps
        b, c, h, w = latent_shape
        z_shape = (b, self.factorized.loc.shape[0], h // 4, w // 4)
        tables, idx = self.factorized.coder_tables(z_shape)
        hyper_stream = StreamDecoder(hyper_bytes)
        z_np = hyper_stream.take(tables, idx)
        hyper_stream.finish()
        device = self.factorized.loc.device
        dtype = self.factorized.loc.dtype
        z_sym = torch.from_numpy(z_np.reshape(z_shape).copy()).to(device=device, dtype=dtype)
        hyper_feat = self.hyper_dec(z_sym)
        refined = self.refined_prior(hyper_feat, prior)

        sym = torch.zeros(latent_shape, device=device, dtype=dtype)
        stream = StreamDecoder(latent_bytes)
        for step in CONTEXT_SCHEDULE:
            mu, sigma = self.estimate_segment_params(
                step, hyper_feat, refined,
                dequantize_latent(sym, dec_step), set(range(step)))
            pos = self._segment_positions(step, latent_shape, device)
            mu_v = mu.reshape(-1)[pos].detach().cpu().numpy()
            sigma_v = sigma.reshape(-1)[pos].detach().cpu().numpy()
            batch = build_laplace_cdf_batch(mu_v, sigma_v)
            decoded = stream.take(batch)
            sym.reshape(-1)[pos] = torch.from_numpy(decoded.copy()).to(device=device, dtype=dtype)
        consumed = stream.finish()
        if consumed != len(latent_bytes):
            raise ShapeMismatchError("context latent chunk has residual bytes")
        return dequantize_latent(sym, dec_step), sym
