import pytest
import torch

from nbvc.errors import ConditioningError
from nbvc.frame_codec import ContextQuantSteps
from nbvc.frame_entropy import (CONTEXT_SCHEDULE, ContextEntropyModel,
                                HyperpriorAlignment, TemporalPriorBuilder)


def _model(c=8, seed=0, alignment=True):
    torch.manual_seed(seed)
    return ContextEntropyModel(latent_channels=c, context_channels=4,
                               hyper_channels=8, prior_channels=8,
                               param_width=8, enable_alignment=alignment)


def _latent(c=8, h=8, w=8, seed=1, scale=3.0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(1, c, h, w, generator=g) * scale


class TestHyperpriorAlignment:
    def test_identity_at_zero_init(self):
        block = HyperpriorAlignment(8, 8)
        prior = torch.randn(1, 8, 6, 6)
        out = block(torch.randn(1, 8, 6, 6), prior)
        assert torch.equal(out, prior)

    def test_linear_in_value_path(self):
        # The attention context is linear in V; scaling the (K, V) producer's
        # value half scales the attended feature linearly.
        from nbvc.layers import linear_cross_attention

        q = torch.randn(1, 4, 5, 5)
        k = torch.randn(1, 4, 5, 5)
        v = torch.randn(1, 4, 5, 5)
        assert torch.allclose(linear_cross_attention(q, k, 3.0 * v),
                              3.0 * linear_cross_attention(q, k, v), atol=1e-6)

    def test_gradcheck(self):
        from nbvc.training.gradcheck import gradcheck

        report = gradcheck("hia")
        assert report.max_rel_err < 1e-3

    def test_shape_preserved_and_mismatch_rejected(self):
        from nbvc.errors import ShapeMismatchError

        block = HyperpriorAlignment(4, 8)
        out = block(torch.randn(1, 4, 6, 6), torch.randn(1, 8, 6, 6))
        assert out.shape == (1, 8, 6, 6)
        with pytest.raises(ShapeMismatchError):
            block(torch.randn(1, 4, 3, 3), torch.randn(1, 8, 6, 6))


class TestTemporalPrior:
    def _builder(self):
        torch.manual_seed(0)
        return TemporalPriorBuilder(latent_channels=8, context_channels=4,
                                    prior_channels=8)

    def test_shape_contract(self):
        builder = self._builder()
        ctx2 = torch.randn(1, 16, 32, 32)  # 4*context_channels at quarter res
        out = builder(_latent(), _latent(seed=2), ctx2, ctx2,
                      (1, 8, 8, 8), ctx2.device, ctx2.dtype)
        assert out.shape == (1, 8, 8, 8)

    def test_determinism(self):
        builder = self._builder()
        ctx2 = torch.randn(1, 16, 32, 32)
        args = (_latent(), _latent(seed=2), ctx2, ctx2, (1, 8, 8, 8),
                ctx2.device, ctx2.dtype)
        assert torch.equal(builder(*args), builder(*args))

    def test_sensitivity_to_forward_latent(self):
        builder = self._builder()
        ctx2 = torch.randn(1, 16, 32, 32)
        yf = _latent()
        base = builder(yf, _latent(seed=2), ctx2, ctx2, (1, 8, 8, 8),
                       ctx2.device, ctx2.dtype)
        bumped = builder(yf + 1e-2, _latent(seed=2), ctx2, ctx2, (1, 8, 8, 8),
                         ctx2.device, ctx2.dtype)
        assert (base - bumped).abs().max() > 1e-7

    def test_intra_reference_uses_learned_embedding(self):
        builder = self._builder()
        with torch.no_grad():
            builder.intra_embedding.fill_(0.7)
        filled = builder.reference_latent(None, (1, 8, 8, 8), None, torch.float32)
        assert torch.equal(filled, torch.full((1, 8, 8, 8), 0.7))
        real = _latent()
        assert builder.reference_latent(real, (1, 8, 8, 8), None,
                                        torch.float32) is real


class TestContextCoding:
    def _setup(self, alignment=True, seed=0):
        model = _model(alignment=alignment, seed=seed)
        steps = ContextQuantSteps(8)
        latent = _latent(seed=seed + 1)
        prior = torch.randn(1, 8, 8, 8)
        return model, steps, latent, prior

    def test_roundtrip_symbols_exact(self):
        model, steps, latent, prior = self._setup()
        pair = steps.steps(1)
        hyper_bytes, latent_bytes, deq, est, sym = model.encode_latent(
            latent, pair, prior)
        out_deq, out_sym = model.decode_latent(hyper_bytes, latent_bytes, pair,
                                               prior, latent.shape)
        assert torch.equal(out_sym, sym)
        assert torch.equal(out_deq, deq)

    def test_step0_params_invariant_to_all_latent_content(self):
        model, steps, latent, prior = self._setup()
        _, feat, _ = model.hyper_forward_train(latent)
        refined = model.refined_prior(feat, prior)
        mu1, s1 = model.estimate_segment_params(0, feat, refined,
                                                torch.zeros_like(latent), set())
        mu2, s2 = model.estimate_segment_params(0, feat, refined,
                                                torch.zeros_like(latent), set())
        assert torch.equal(mu1, mu2) and torch.equal(s1, s2)
        # Feeding any latent content at step 0 is a conditioning violation.
        with pytest.raises(ConditioningError):
            model.estimate_segment_params(0, feat, refined, latent, {0})

    def test_causality_randomized_excluded_segments(self):
        model, steps, latent, prior = self._setup(seed=3)
        _, feat, _ = model.hyper_forward_train(latent)
        refined = model.refined_prior(feat, prior)
        masks = model.partition.masks(8, 8)
        g = torch.Generator().manual_seed(9)
        for step in CONTEXT_SCHEDULE:
            avail = set(range(step))
            mu1, s1 = model.estimate_segment_params(step, feat, refined,
                                                    latent, avail)
            noisy = latent.clone()
            for seg in set(range(4)) - avail:
                noisy += torch.randn(latent.shape, generator=g) * masks[seg]
            mu2, s2 = model.estimate_segment_params(step, feat, refined,
                                                    noisy, avail)
            assert torch.equal(mu1, mu2) and torch.equal(s1, s2)

    def test_alignment_disabled_still_codes(self):
        model, steps, latent, prior = self._setup(alignment=False)
        pair = steps.steps(2)
        hyper_bytes, latent_bytes, deq, _, sym = model.encode_latent(
            latent, pair, prior)
        out_deq, out_sym = model.decode_latent(hyper_bytes, latent_bytes, pair,
                                               prior, latent.shape)
        assert torch.equal(out_sym, sym)

    def test_alignment_flag_changes_bits(self):
        model, steps, latent, prior = self._setup()
        with torch.no_grad():
            for p in model.alignment.project.parameters():
                p.add_(torch.randn_like(p) * 0.2)
        pair = steps.steps(1)
        _, with_hia, *_ = model.encode_latent(latent, pair, prior)
        model.enable_alignment = False
        _, without_hia, *_ = model.encode_latent(latent, pair, prior)
        assert with_hia != without_hia

    def test_actual_bytes_near_estimate(self):
        model, steps, latent, prior = self._setup()
        hyper_bytes, latent_bytes, _, est, _ = model.encode_latent(
            latent, steps.steps(1), prior)
        actual_bits = 8 * (len(hyper_bytes) + len(latent_bytes))
        assert abs(actual_bits - est) <= 0.02 * est + 2 * 64 * 8
