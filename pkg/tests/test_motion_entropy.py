import numpy as np
import pytest
import torch

from nbvc.coder.range_coder import StreamDecoder
from nbvc.coder.tables import build_laplace_cdf_batch
from nbvc.errors import ConditioningError, DecodeError
from nbvc.layers import dequantize_latent, quantize_latent
from nbvc.motion_codec import MotionQuantSteps
from nbvc.motion_entropy import (INTERLEAVED_SCHEDULE, MotionEntropyModel,
                                 SegmentPartition, allowed_conditioning)
from nbvc.probability import symbol_bits


def _model(c=8, seed=0):
    torch.manual_seed(seed)
    return MotionEntropyModel(c, hyper_channels=8, prior_channels=8, param_width=8)


def _inputs(c=8, h=8, w=8, seed=1):
    g = torch.Generator().manual_seed(seed)
    raw_f = torch.randn(1, c, h, w, generator=g)
    raw_b = torch.randn(1, c, h, w, generator=g)
    flows = torch.randn(1, 4, 16 * h, 16 * w, generator=g)
    return raw_f, raw_b, flows[:, :2], flows[:, 2:]


class TestSchedule:
    def test_interleave_order(self):
        assert INTERLEAVED_SCHEDULE == (
            ("f", 0), ("b", 0), ("f", 1), ("b", 1),
            ("f", 2), ("b", 2), ("f", 3), ("b", 3))

    def test_forward_step0_sees_nothing(self):
        fwd, back = allowed_conditioning("f", 0)
        assert fwd == set() and back == set()

    def test_backward_step0_sees_forward_segment0(self):
        fwd, back = allowed_conditioning("b", 0)
        assert fwd == {0} and back == set()

    def test_asymmetry_at_every_step(self):
        for step in range(4):
            fwd_f, back_f = allowed_conditioning("f", step)
            fwd_b, back_b = allowed_conditioning("b", step)
            assert fwd_f == set(range(step)) and back_f == set(range(step))
            assert fwd_b == set(range(step + 1)) and back_b == set(range(step))

    def test_cross_direction_flag_drops_other_side(self):
        fwd, back = allowed_conditioning("b", 2, cross_direction=False)
        assert fwd == set() and back == {0, 1}


class TestPartition:
    def test_exact_cover_and_equal_sizes(self):
        part = SegmentPartition(8)
        masks = part.masks(6, 4)
        assert (masks.sum(dim=0) == 1).all()
        sizes = masks.sum(dim=(1, 2, 3))
        assert (sizes == 8 * 6 * 4 / 4).all()

    def test_assignment_table(self):
        part = SegmentPartition(4)
        assert part.segment_index(0, 0, 0) == 0  # group A, even
        assert part.segment_index(3, 0, 1) == 1  # group B, odd
        assert part.segment_index(1, 1, 2) == 2  # group A, odd
        assert part.segment_index(2, 1, 1) == 3  # group B, even

    def test_composite_masks_and_flags(self):
        part = SegmentPartition(4)
        values = torch.ones(1, 4, 4, 4)
        comp = part.composite(values, {0})
        data, flags = comp[:, :4], comp[:, 4:]
        masks = part.masks(4, 4)
        assert torch.equal(data, values * masks[0])
        even = (torch.arange(4).view(4, 1) + torch.arange(4).view(1, 4)) % 2 == 0
        assert torch.equal(flags[0, 0], even.float())
        assert not flags[0, 1].any()

    def test_odd_channels_rejected(self):
        from nbvc.errors import ShapeMismatchError

        with pytest.raises(ShapeMismatchError):
            SegmentPartition(5)


class TestHyperAndPrior:
    def test_hyper_shapes(self):
        model = _model()
        raw_f, raw_b, *_ = _inputs()
        z_sym, feat, bits = model.hyper_forward_train(raw_f, raw_b)
        assert z_sym.shape == (1, 8, 2, 2)  # latent/4 per axis
        assert feat.shape == (1, 8, 8, 8)
        assert float(bits) > 0 and torch.isfinite(bits)

    def test_zero_bias_zero_symbols(self):
        model = _model()
        with torch.no_grad():
            for m in model.hyper_enc.modules():
                if isinstance(m, torch.nn.Conv2d):
                    m.bias.zero_()
        z_sym, _, _ = model.hyper_forward_train(torch.zeros(1, 8, 8, 8),
                                                torch.zeros(1, 8, 8, 8))
        assert not z_sym.any()

    def test_temporal_prior_shape_and_determinism(self):
        model = _model()
        _, _, v_bf, v_fb = _inputs()
        p1 = model.temporal_prior(v_bf, v_fb)
        p2 = model.temporal_prior(v_bf.clone(), v_fb.clone())
        assert p1.shape == (1, 8, 8, 8)
        assert torch.equal(p1, p2)

    def test_temporal_prior_sensitivity(self):
        # Nonzero Jacobian wrt the first flow, probed by finite differences.
        model = _model()
        _, _, v_bf, v_fb = _inputs()
        base = model.temporal_prior(v_bf, v_fb)
        bumped = model.temporal_prior(v_bf + 1e-2, v_fb)
        assert (base - bumped).abs().max() > 1e-6


class TestParamEstimation:
    def test_sigma_within_clamp(self):
        model = _model()
        raw_f, raw_b, v_bf, v_fb = _inputs()
        prior = model.temporal_prior(v_bf, v_fb)
        _, feat, _ = model.hyper_forward_train(raw_f, raw_b)
        _, sigma = model.estimate_segment_params(
            "f", 0, feat, prior, torch.zeros_like(raw_f), torch.zeros_like(raw_b),
            set(), set())
        assert (sigma >= 0.01).all() and (sigma <= 64.0).all()

    def test_conditioning_violation_raises(self):
        model = _model()
        raw_f, raw_b, v_bf, v_fb = _inputs()
        prior = model.temporal_prior(v_bf, v_fb)
        _, feat, _ = model.hyper_forward_train(raw_f, raw_b)
        with pytest.raises(ConditioningError):
            model.estimate_segment_params("f", 1, feat, prior, raw_f, raw_b,
                                          {0, 1}, {0})
        with pytest.raises(ConditioningError):
            model.estimate_segment_params("b", 0, feat, prior, raw_f, raw_b,
                                          {0}, {0})

    def test_params_invariant_to_excluded_segments(self):
        # Randomize content outside the conditioning set: parameters must not move.
        model = _model()
        raw_f, raw_b, v_bf, v_fb = _inputs()
        prior = model.temporal_prior(v_bf, v_fb)
        _, feat, _ = model.hyper_forward_train(raw_f, raw_b)
        g = torch.Generator().manual_seed(5)
        masks = model.partition.masks(8, 8)
        for direction, step in INTERLEAVED_SCHEDULE:
            avail_f, avail_b = allowed_conditioning(direction, step)
            mu1, s1 = model.estimate_segment_params(
                direction, step, feat, prior, raw_f, raw_b, avail_f, avail_b)
            noise_f = raw_f.clone()
            noise_b = raw_b.clone()
            for seg in set(range(4)) - avail_f:
                noise_f += torch.randn(raw_f.shape, generator=g) * masks[seg]
            for seg in set(range(4)) - avail_b:
                noise_b += torch.randn(raw_b.shape, generator=g) * masks[seg]
            mu2, s2 = model.estimate_segment_params(
                direction, step, feat, prior, noise_f, noise_b, avail_f, avail_b)
            assert torch.equal(mu1, mu2) and torch.equal(s1, s2)

    def test_backward_sees_forward_same_step(self):
        # The asymmetric edge: changing forward segment i content changes the
        # backward step-i parameters (and only through that allowed path).
        model = _model(seed=2)
        raw_f, raw_b, v_bf, v_fb = _inputs(seed=3)
        prior = model.temporal_prior(v_bf, v_fb)
        _, feat, _ = model.hyper_forward_train(raw_f, raw_b)
        masks = model.partition.masks(8, 8)
        for step in range(4):
            avail_f, avail_b = allowed_conditioning("b", step)
            mu1, _ = model.estimate_segment_params(
                "b", step, feat, prior, raw_f, raw_b, avail_f, avail_b)
            bumped = raw_f + 3.0 * masks[step]  # forward segment of this step
            mu2, _ = model.estimate_segment_params(
                "b", step, feat, prior, bumped, raw_b, avail_f, avail_b)
            assert not torch.equal(mu1, mu2)


class TestLosslessCoding:
    def _code(self, seed=0, cross=True):
        model = _model(seed=seed)
        model.cross_direction = cross
        steps = MotionQuantSteps(8)
        raw_f, raw_b, v_bf, v_fb = _inputs(seed=seed + 1)
        prior = model.temporal_prior(v_bf, v_fb)
        pair = steps.steps(1)
        hyper_bytes, latent_bytes, deq_f, deq_b, est = model.encode_latents(
            raw_f * 3, raw_b * 3, pair[0], pair[1], prior)
        return model, steps, raw_f * 3, raw_b * 3, prior, pair, \
            hyper_bytes, latent_bytes, deq_f, deq_b, est

    def test_roundtrip_symbols_exact(self):
        (model, steps, raw_f, raw_b, prior, pair,
         hyper_bytes, latent_bytes, deq_f, deq_b, _) = self._code()
        out_f, out_b, sym_f, sym_b = model.decode_latents(
            hyper_bytes, latent_bytes, pair[0], pair[1], prior, raw_f.shape)
        assert torch.equal(out_f, deq_f) and torch.equal(out_b, deq_b)
        enc_sym_f = quantize_latent(raw_f, pair[0][0], training=False)
        enc_sym_b = quantize_latent(raw_b, pair[1][0], training=False)
        assert torch.equal(sym_f, enc_sym_f) and torch.equal(sym_b, enc_sym_b)

    def test_roundtrip_without_cross_conditioning(self):
        (model, steps, raw_f, raw_b, prior, pair,
         hyper_bytes, latent_bytes, deq_f, deq_b, _) = self._code(cross=False)
        out_f, out_b, _, _ = model.decode_latents(
            hyper_bytes, latent_bytes, pair[0], pair[1], prior, raw_f.shape)
        assert torch.equal(out_f, deq_f) and torch.equal(out_b, deq_b)

    def test_actual_bytes_near_estimate(self):
        *_, hyper_bytes, latent_bytes, _, _, est = self._code()
        actual_bits = 8 * (len(hyper_bytes) + len(latent_bytes))
        assert abs(actual_bits - est) <= 0.02 * est + 2 * 64 * 8

    def test_prefix_segments_survive_late_corruption(self):
        (model, steps, raw_f, raw_b, prior, pair,
         hyper_bytes, latent_bytes, deq_f, deq_b, _) = self._code()
        _, dec_f = pair[0]
        _, dec_b = pair[1]
        corrupted = bytearray(latent_bytes)
        corrupted[-6] ^= 0xA5  # tamper late in the payload
        corrupted = bytes(corrupted)

        z_shape = (1, 8, 2, 2)
        tables, idx = model.factorized.coder_tables(z_shape)
        hs = StreamDecoder(hyper_bytes)
        z = hs.take(tables, idx)
        hyper_feat = model.hyper_dec(torch.from_numpy(z.reshape(z_shape).copy()).float())

        sym_f = torch.zeros_like(raw_f)
        sym_b = torch.zeros_like(raw_b)
        enc_sym_f = quantize_latent(raw_f, pair[0][0], training=False)
        enc_sym_b = quantize_latent(raw_b, pair[1][0], training=False)
        stream = StreamDecoder(corrupted)
        decoded_steps = []
        try:
            for direction, step in INTERLEAVED_SCHEDULE:
                avail_f, avail_b = allowed_conditioning(direction, step)
                mu, sigma = model.estimate_segment_params(
                    direction, step, hyper_feat, prior,
                    dequantize_latent(sym_f, dec_f),
                    dequantize_latent(sym_b, dec_b), avail_f, avail_b)
                pos = model._segment_positions(step, raw_f.shape, raw_f.device)
                batch = build_laplace_cdf_batch(
                    mu.reshape(-1)[pos].detach().numpy(),
                    sigma.reshape(-1)[pos].detach().numpy())
                vals = stream.take(batch)
                tgt = sym_f if direction == "f" else sym_b
                tgt.reshape(-1)[pos] = torch.from_numpy(vals.copy()).float()
                decoded_steps.append((direction, step))
            stream.finish()
        except DecodeError:
            pass
        # The first interleaved steps decode identically despite the damage.
        masks = model.partition.masks(8, 8)
        assert ("f", 0) in decoded_steps and ("b", 0) in decoded_steps
        assert torch.equal(sym_f * masks[0], enc_sym_f * masks[0])
        assert torch.equal(sym_b * masks[0], enc_sym_b * masks[0])


def test_rate_estimate_drops_with_matched_sigma():
    g = torch.Generator().manual_seed(0)
    spread = 3.0
    symbols = torch.round(torch.randn(1, 4, 16, 16, generator=g) * spread)
    bits_matched = symbol_bits(symbols, torch.zeros(()), torch.tensor(spread)).sum()
    bits_wide = symbol_bits(symbols, torch.zeros(()), torch.tensor(8 * spread)).sum()
    bits_narrow = symbol_bits(symbols, torch.zeros(()), torch.tensor(spread / 8)).sum()
    assert bits_matched > 0
    assert bits_matched < bits_wide
    assert bits_matched < bits_narrow
