"""Conditional entropy model for the two motion latents.

The two latents are split into four segments each (channel half x spatial
checkerboard) and coded in eight interleaved steps, alternating forward and
backward. At step i the forward direction conditions on segments <i of both
directions; the backward direction additionally sees the forward segment i
(it codes after it). Per-step parameter networks fuse the hyper feature, a
temporal prior from the cross-reference flows, and zero-filled composites of
the already-decoded segments.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .coder.range_coder import StreamDecoder, StreamEncoder
from .coder.tables import build_laplace_cdf_batch
from .errors import ConditioningError, ShapeMismatchError
from .layers import conv3, dequantize_latent, quantize_latent, round_ste
from .probability import clamp_sigma, symbol_bits, symbol_bits_np

# (direction, step) pairs in coding order.
INTERLEAVED_SCHEDULE = tuple(
    (direction, step) for step in range(4) for direction in ("f", "b")
)

SEGMENT_EVEN_GROUP = {0: 0, 3: 1}  # even-parity segments per channel group
SEGMENT_ODD_GROUP = {2: 0, 1: 1}   # odd-parity segments per channel group


def allowed_conditioning(direction, step, cross_direction=True):
    """Allowed (forward_set, backward_set) of segment ids for a coding step.

    Forward at step i sees segments <i of both directions; backward at step i
    sees its own segments <i plus forward segments <i+1 (it codes after the
    forward segment of the same step).
    """
    if direction == "f":
        fwd, back = set(range(step)), set(range(step))
    else:
        fwd, back = set(range(step + 1)), set(range(step))
    if not cross_direction:
        if direction == "f":
            back = set()
        else:
            fwd = set()
    return fwd, back


class SegmentPartition:
    """Channel-half x checkerboard split into four segments.

    Group A is the first half of the channels, B the rest; even parity means
    (y + x) % 2 == 0. Segments: 0=(A,even), 1=(B,odd), 2=(A,odd), 3=(B,even).
    """

    def __init__(self, channels):
        if channels % 2:
            raise ShapeMismatchError("segment partition needs an even channel count")
        self.channels = channels
        self._cache = {}

    def masks(self, h, w, device=None, dtype=torch.float32):
        key = (h, w, str(device), dtype)
        if key not in self._cache:
            ys = torch.arange(h, device=device).view(h, 1)
            xs = torch.arange(w, device=device).view(1, w)
            even = ((ys + xs) % 2 == 0)
            group_a = torch.zeros(self.channels, 1, 1, dtype=torch.bool, device=device)
            group_a[: self.channels // 2] = True
            seg = [
                group_a & even,
                ~group_a & ~even,
                group_a & ~even,
                ~group_a & even,
            ]
            self._cache[key] = torch.stack(seg).to(dtype)
        return self._cache[key]

    def segment_index(self, c, y, x):
        group_a = c < self.channels // 2
        even = (y + x) % 2 == 0
        if group_a:
            return 0 if even else 2
        return 3 if even else 1

    def composite(self, values, available, h=None, w=None):
        """Zero-filled composite of the available segments plus two binary
        availability channels (one per channel group)."""
        b, c, h, w = values.shape
        masks = self.masks(h, w, values.device, values.dtype)
        if available:
            keep = sum(masks[i] for i in sorted(available))
        else:
            keep = torch.zeros_like(masks[0])
        ys = torch.arange(h, device=values.device).view(h, 1)
        xs = torch.arange(w, device=values.device).view(1, w)
        even = ((ys + xs) % 2 == 0).to(values.dtype)
        avail_a = even * (1.0 if 0 in available else 0.0) + (1 - even) * (1.0 if 2 in available else 0.0)
        avail_b = even * (1.0 if 3 in available else 0.0) + (1 - even) * (1.0 if 1 in available else 0.0)
        flags = torch.stack([avail_a, avail_b]).unsqueeze(0).expand(b, 2, h, w)
        return torch.cat([values * keep.unsqueeze(0), flags], dim=1)


class FactorizedLaplacePrior(nn.Module):
    """Learned per-channel Laplace prior for unit-step hyper symbols."""

    def __init__(self, channels):
        super().__init__()
        self.loc = nn.Parameter(torch.zeros(channels))
        self.log_scale = nn.Parameter(torch.zeros(channels))

    def _params(self):
        sigma = torch.exp(self.log_scale).clamp(0.01, 64.0)
        return self.loc, sigma

    def bits(self, symbols: torch.Tensor) -> torch.Tensor:
        mu, sigma = self._params()
        return symbol_bits(symbols, mu.view(1, -1, 1, 1), sigma.view(1, -1, 1, 1)).sum()

    def coder_tables(self, shape):
        """TableBatch with one table per channel plus the per-element index map."""
        mu, sigma = self._params()
        batch = build_laplace_cdf_batch(
            mu.detach().cpu().numpy(), sigma.detach().cpu().numpy()
        )
        b, c, h, w = shape
        idx = torch.arange(c).view(1, c, 1, 1).expand(shape).reshape(-1)
        return batch, idx.numpy()

    def estimate_bits_np(self, symbols_np):
        mu, sigma = self._params()
        mu = mu.detach().cpu().numpy().reshape(1, -1, 1, 1)
        sigma = sigma.detach().cpu().numpy().reshape(1, -1, 1, 1)
        return float(symbol_bits_np(symbols_np, mu, sigma).sum())


class SegmentParamNet(nn.Module):
    """Fuses hyper feature, temporal prior, and segment composites into
    per-element Laplace parameters."""

    def __init__(self, in_channels, width, latent_channels):
        super().__init__()
        self.net = nn.Sequential(
            conv3(in_channels, width), nn.GELU(),
            conv3(width, 2 * latent_channels),
        )

    def forward(self, x):
        mu, raw_sigma = self.net(x).chunk(2, dim=1)
        return mu, clamp_sigma(raw_sigma)


class MotionEntropyModel(nn.Module):
    def __init__(self, latent_channels, hyper_channels=64, prior_channels=64,
                 param_width=64, cross_direction=True):
        super().__init__()
        self.latent_channels = latent_channels
        self.cross_direction = cross_direction
        self.partition = SegmentPartition(latent_channels)
        c, hc, pc = latent_channels, hyper_channels, prior_channels
        self.hyper_enc = nn.Sequential(
            conv3(2 * c, hc, stride=2), nn.GELU(), conv3(hc, hc, stride=2),
        )
        self.hyper_dec = nn.Sequential(
            nn.Conv2d(hc, hc * 4, 3, padding=1), nn.PixelShuffle(2), nn.GELU(),
            nn.Conv2d(hc, hc * 4, 3, padding=1), nn.PixelShuffle(2), nn.GELU(),
            conv3(hc, hc),
        )
        self.factorized = FactorizedLaplacePrior(hc)
        self.temporal = nn.Sequential(
            conv3(4, pc, stride=2), nn.GELU(),
            conv3(pc, pc, stride=2), nn.GELU(),
            conv3(pc, pc, stride=2), nn.GELU(),
            conv3(pc, pc, stride=2),
        )
        in_ch = hc + pc + 2 * (c + 2)
        self.param_nets = nn.ModuleDict({
            f"{direction}{step}": SegmentParamNet(in_ch, param_width, c)
            for direction, step in INTERLEAVED_SCHEDULE
        })

    def temporal_prior(self, flow_back_to_fwd, flow_fwd_to_back):
        return self.temporal(torch.cat([flow_back_to_fwd, flow_fwd_to_back], dim=1))

    def hyper_forward_train(self, deq_fwd, deq_back):
        z = self.hyper_enc(torch.cat([deq_fwd, deq_back], dim=1))
        z_sym = round_ste(z)
        return z_sym, self.hyper_dec(z_sym), self.factorized.bits(z_sym)

    def estimate_segment_params(self, direction, step, hyper_feat, prior,
                                deq_fwd, deq_back, available_fwd, available_back):
        """Laplace (mu, sigma) for one (direction, step); full latent shape."""
        allowed_f, allowed_b = allowed_conditioning(direction, step, self.cross_direction)
        if not set(available_fwd) <= allowed_f or not set(available_back) <= allowed_b:
            raise ConditioningError(
                f"segments {sorted(available_fwd)}/{sorted(available_back)} exceed the "
                f"allowed conditioning {sorted(allowed_f)}/{sorted(allowed_b)} "
                f"for direction {direction!r} step {step}"
            )
        comp_f = self.partition.composite(deq_fwd, set(available_fwd))
        comp_b = self.partition.composite(deq_back, set(available_back))
        x = torch.cat([hyper_feat, prior, comp_f, comp_b], dim=1)
        return self.param_nets[f"{direction}{step}"](x)

    def _step_inputs(self, direction, step):
        return allowed_conditioning(direction, step, self.cross_direction)

    def bits_train(self, sym_fwd, sym_back, deq_fwd, deq_back, hyper_feat, prior):
        """Differentiable total latent bits over the interleaved schedule."""
        masks = self.partition.masks(sym_fwd.shape[-2], sym_fwd.shape[-1],
                                     sym_fwd.device, sym_fwd.dtype)
        total = sym_fwd.new_zeros(())
        for direction, step in INTERLEAVED_SCHEDULE:
            avail_f, avail_b = self._step_inputs(direction, step)
            mu, sigma = self.estimate_segment_params(
                direction, step, hyper_feat, prior, deq_fwd, deq_back, avail_f, avail_b)
            sym = sym_fwd if direction == "f" else sym_back
            seg_mask = masks[step].unsqueeze(0)
            total = total + (symbol_bits(sym, mu, sigma) * seg_mask).sum()
        return total

    # ---- lossless coding -------------------------------------------------

    def _segment_positions(self, step, shape, device):
        mask = self.partition.masks(shape[-2], shape[-1], device)[step]
        return mask.reshape(-1).nonzero(as_tuple=False).squeeze(1)

    def encode_latents(self, raw_fwd, raw_back, steps_fwd, steps_back, prior):
        """Quantize and entropy-code both latents; returns
        (hyper_bytes, latent_bytes, deq_fwd, deq_back, estimated_bits)."""
        (enc_f, dec_f), (enc_b, dec_b) = steps_fwd, steps_back
        sym_f = quantize_latent(raw_fwd, enc_f, training=False)
        sym_b = quantize_latent(raw_back, enc_b, training=False)
        deq_f = dequantize_latent(sym_f, dec_f)
        deq_b = dequantize_latent(sym_b, dec_b)

        z = self.hyper_enc(torch.cat([deq_f, deq_b], dim=1))
        z_sym = torch.round(z)
        hyper_feat = self.hyper_dec(z_sym)

        z_np = z_sym.detach().cpu().numpy().astype("int64")
        tables, idx = self.factorized.coder_tables(z_sym.shape)
        hyper_enc_stream = StreamEncoder()
        hyper_enc_stream.put(z_np.reshape(-1), tables, idx)
        hyper_bytes = hyper_enc_stream.finish()
        est_bits = self.factorized.estimate_bits_np(z_np)

        stream = StreamEncoder()
        dec_state_f = torch.zeros_like(sym_f)
        dec_state_b = torch.zeros_like(sym_b)
        for direction, step in INTERLEAVED_SCHEDULE:
            avail_f, avail_b = self._step_inputs(direction, step)
            mu, sigma = self.estimate_segment_params(
                direction, step, hyper_feat, prior,
                dequantize_latent(dec_state_f, dec_f),
                dequantize_latent(dec_state_b, dec_b),
                avail_f, avail_b)
            sym = sym_f if direction == "f" else sym_b
            pos = self._segment_positions(step, sym.shape, sym.device)
            flat = sym.reshape(-1)[pos]
            mu_v = mu.reshape(-1)[pos]
            sigma_v = sigma.reshape(-1)[pos]
            batch = build_laplace_cdf_batch(
                mu_v.detach().cpu().numpy(), sigma_v.detach().cpu().numpy())
            stream.put(flat.detach().cpu().numpy().astype("int64"), batch)
            est_bits += float(symbol_bits_np(
                flat.detach().cpu().numpy(),
                mu_v.detach().cpu().numpy(),
                sigma_v.detach().cpu().numpy()).sum())
            # Mirror the decoder: reveal this segment before the next step.
            if direction == "f":
                dec_state_f.reshape(-1)[pos] = flat
            else:
                dec_state_b.reshape(-1)[pos] = flat
        latent_bytes = stream.finish()
        if not torch.equal(dec_state_f, sym_f) or not torch.equal(dec_state_b, sym_b):
            raise ShapeMismatchError("segment partition failed to cover the latent")
        return hyper_bytes, latent_bytes, deq_f, deq_b, est_bits

    def decode_latents(self, hyper_bytes, latent_bytes, steps_fwd, steps_back,
                       prior, latent_shape):
        (_, dec_f), (_, dec_b) = steps_fwd, steps_back
        b, c, h, w = latent_shape
        zh, zw = h // 4, w // 4
        z_shape = (b, self.factorized.loc.shape[0], zh, zw)
        tables, idx = self.factorized.coder_tables(z_shape)
        hyper_stream = StreamDecoder(hyper_bytes)
        z_np = hyper_stream.take(tables, idx)
        hyper_stream.finish()
        device = self.factorized.loc.device
        dtype = self.factorized.loc.dtype
        z_sym = torch.from_numpy(z_np.reshape(z_shape).copy()).to(device=device, dtype=dtype)
        hyper_feat = self.hyper_dec(z_sym)

        sym_f = torch.zeros(latent_shape, device=device, dtype=dtype)
        sym_b = torch.zeros(latent_shape, device=device, dtype=dtype)
        stream = StreamDecoder(latent_bytes)
        for direction, step in INTERLEAVED_SCHEDULE:
            avail_f, avail_b = self._step_inputs(direction, step)
            mu, sigma = self.estimate_segment_params(
                direction, step, hyper_feat, prior,
                dequantize_latent(sym_f, dec_f),
                dequantize_latent(sym_b, dec_b),
                avail_f, avail_b)
            sym = sym_f if direction == "f" else sym_b
            pos = self._segment_positions(step, latent_shape, device)
            mu_v = mu.reshape(-1)[pos]
            sigma_v = sigma.reshape(-1)[pos]
            batch = build_laplace_cdf_batch(
                mu_v.detach().cpu().numpy(), sigma_v.detach().cpu().numpy())
            decoded = stream.take(batch)
            sym.reshape(-1)[pos] = torch.from_numpy(decoded.copy()).to(device=device, dtype=dtype)
        consumed = stream.finish()
        if consumed != len(latent_bytes):
            raise ShapeMismatchError("motion latent chunk has residual bytes")
        return (dequantize_latent(sym_f, dec_f), dequantize_latent(sym_b, dec_b),
                sym_f, sym_b)
