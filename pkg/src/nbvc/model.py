"""Full codec assembly: configuration, per-frame coding passes, checkpoints."""

import hashlib
from dataclasses import asdict, dataclass, field, fields

import torch
import torch.nn as nn

from .container import (CHUNK_CTX_HYPER, CHUNK_CTX_LATENT, CHUNK_INTRA,
                        CHUNK_MOTION_HYPER, CHUNK_MOTION_LATENT)
from .context_fusion import ContextMiner, IntraFeatureExtractor
from .core_types import Frame, validate_rate_index
from .errors import ShapeMismatchError
from .frame_codec import (ContextQuantSteps, ContextualDecoder,
                          ContextualEncoder, LearnedIntraCodec, RawIntraCodec)
from .frame_entropy import ContextEntropyModel
from .layers import dequantize_latent, quantize_latent
from .motion_codec import MotionAutoEncoder, MotionQuantSteps
from .motion_entropy import MotionEntropyModel
from .motion_toolkit import MotionField, PyramidFlowEstimator


@dataclass
class ModelConfig:
    motion_latent_channels: int = 64
    context_latent_channels: int = 64
    context_channels: int = 32
    reference_feature_channels: int = 48
    motion_widths: tuple = (64, 64, 96)
    frame_widths: tuple = (48, 64, 80, 96)
    motion_hyper_channels: int = 64
    motion_prior_channels: int = 64
    context_hyper_channels: int = 64
    context_prior_channels: int = 64
    param_width: int = 64
    flow_levels: int = 4
    flow_width: int = 16
    intra_latent_channels: int = 64
    intra_width: int = 48
    intra_mode: str = "raw"  # "raw" | "learned"
    gate_variant: str = "sigmoid"  # "sigmoid" | "softmax"
    # Mechanism switches (ablation hooks).
    enable_motion_interaction: bool = True
    shared_direction_steps: bool = False
    cross_direction_conditioning: bool = True
    weighted_context_fusion: bool = True
    hyperprior_alignment: bool = True

    @classmethod
    def tiny(cls, intra_mode="raw"):
        """Desk-scale configuration used by the smoke experiments and tests.

        Latent widths stay at 48; everything else is cut down so a full
        B-frame training step fits a CPU budget.
        """
        return cls(
            motion_latent_channels=48, context_latent_channels=48,
            context_channels=12, reference_feature_channels=16,
            motion_widths=(16, 16, 24), frame_widths=(12, 16, 24, 32),
            motion_hyper_channels=16, motion_prior_channels=16,
            context_hyper_channels=16, context_prior_channels=16,
            param_width=16, flow_levels=3, flow_width=8,
            intra_latent_channels=32, intra_width=16, intra_mode=intra_mode,
        )

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in names}
        for key in ("motion_widths", "frame_widths"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class RefState:
    """Everything a later frame may reference from a decoded frame."""

    frame: torch.Tensor            # (1, 3, H, W) decoded pixels
    feature: torch.Tensor          # (1, C_f, H, W)
    latent: torch.Tensor = None    # (1, C_y, H/16, W/16); None for intra frames

    def detached(self):
        return RefState(self.frame.detach(), self.feature.detach(),
                        None if self.latent is None else self.latent.detach())


class BFrameCodec(nn.Module):
    def __init__(self, config: ModelConfig = None):
        super().__init__()
        cfg = config or ModelConfig()
        self.config = cfg
        self.flow_net = PyramidFlowEstimator(cfg.flow_levels, cfg.flow_width)
        self.flow_provider = None  # optional external provider
        self.motion_ae = MotionAutoEncoder(
            cfg.motion_latent_channels, cfg.motion_widths, cfg.gate_variant,
            enable_interaction=True)
        self.motion_steps = MotionQuantSteps(cfg.motion_latent_channels)
        self.motion_entropy = MotionEntropyModel(
            cfg.motion_latent_channels, cfg.motion_hyper_channels,
            cfg.motion_prior_channels, cfg.param_width)
        self.miner = ContextMiner(cfg.reference_feature_channels, cfg.context_channels)
        self.intra_feature = IntraFeatureExtractor(cfg.reference_feature_channels)
        self.ctx_encoder = ContextualEncoder(
            cfg.frame_widths, cfg.context_latent_channels, cfg.context_channels)
        self.ctx_decoder = ContextualDecoder(
            cfg.frame_widths, cfg.context_latent_channels, cfg.context_channels,
            cfg.reference_feature_channels)
        self.ctx_steps = ContextQuantSteps(cfg.context_latent_channels)
        self.ctx_entropy = ContextEntropyModel(
            cfg.context_latent_channels, cfg.context_channels,
            cfg.context_hyper_channels, cfg.context_prior_channels,
            cfg.param_width)
        if cfg.intra_mode == "learned":
            self.intra_codec = LearnedIntraCodec(cfg.intra_latent_channels, cfg.intra_width)
        else:
            self.intra_codec = RawIntraCodec()

    # ---- configuration-sensitive plumbing ---------------------------------

    def _sync_flags(self):
        self.motion_ae.enable_interaction = self.config.enable_motion_interaction
        self.motion_entropy.cross_direction = self.config.cross_direction_conditioning
        self.ctx_entropy.enable_alignment = self.config.hyperprior_alignment

    def _flow(self, src, dst, src_index=None, dst_index=None):
        if self.flow_provider is not None:
            return self.flow_provider.estimate(src, dst, src_index, dst_index)
        return self.flow_net(src, dst)

    def _flow_pair(self, src_a, dst_a, src_b, dst_b, indices=None):
        """Two flow estimates in one batched pass (providers fall back to
        per-pair calls so file-backed lookups keep their indices)."""
        if self.flow_provider is not None:
            ia = indices[0] if indices else (None, None)
            ib = indices[1] if indices else (None, None)
            return (self.flow_provider.estimate(src_a, dst_a, *ia),
                    self.flow_provider.estimate(src_b, dst_b, *ib))
        both = self.flow_net(torch.cat([src_a, src_b]), torch.cat([dst_a, dst_b]))
        return both[0:1], both[1:2]

    def estimate_flow(self, src: Frame, dst: Frame) -> MotionField:
        """Flow such that warping dst with it approximates src."""
        if src.pixels.shape != dst.pixels.shape:
            raise ShapeMismatchError("flow estimation needs equal-size frames")
        flow = self._flow(src.pixels.unsqueeze(0), dst.pixels.unsqueeze(0),
                          src.frame_index, dst.frame_index)
        return MotionField(flow.squeeze(0), tag="estimated")

    def _shared_b_frame_prep(self, ref_fwd: RefState, ref_back: RefState,
                             fwd_index=None, back_index=None):
        """Quantities computable on both sides from decoded references."""
        v_back_to_fwd, v_fwd_to_back = self._flow_pair(
            ref_back.frame, ref_fwd.frame, ref_fwd.frame, ref_back.frame,
            indices=((back_index, fwd_index), (fwd_index, back_index)))
        pred_fwd = v_back_to_fwd / 2
        pred_back = v_fwd_to_back / 2
        motion_prior = self.motion_entropy.temporal_prior(v_back_to_fwd, v_fwd_to_back)
        return pred_fwd, pred_back, motion_prior

    def _contexts_from_motion(self, ref_fwd, ref_back, v_fwd, v_back):
        ctx_fwd = self.miner(ref_fwd.feature, v_fwd, direction="f")
        ctx_back = self.miner(ref_back.feature, v_back, direction="b")
        return ctx_fwd, ctx_back

    def _context_prior(self, ref_fwd, ref_back, ctx_fwd, ctx_back, latent_shape):
        dev = ctx_fwd.level2.device
        return self.ctx_entropy.prior_builder(
            ref_fwd.latent, ref_back.latent, ctx_fwd.level2, ctx_back.level2,
            latent_shape, dev, ctx_fwd.level2.dtype)

    def _latent_shape(self, frame_shape):
        b, _, h, w = frame_shape
        return (b, self.config.context_latent_channels, h // 16, w // 16)

    # ---- training path -----------------------------------------------------

    def b_frame_train(self, x_t: torch.Tensor, ref_fwd: RefState,
                      ref_back: RefState, rate_index: int):
        """Differentiable single-B-frame pass; returns reconstruction, the
        propagated state, and estimated bits split by stream."""
        validate_rate_index(rate_index)
        self._sync_flags()
        pred_f, pred_b, motion_prior = self._shared_b_frame_prep(ref_fwd, ref_back)
        v_tf, v_tb = self._flow_pair(x_t, ref_fwd.frame, x_t, ref_back.frame)
        mvd_f = v_tf - pred_f
        mvd_b = v_tb - pred_b

        m_f, m_b = self.motion_ae.encode(mvd_f, mvd_b)
        (enc_f, dec_f), (enc_b, dec_b) = self.motion_steps.steps(
            rate_index, shared=self.config.shared_direction_steps)
        sym_f = quantize_latent(m_f, enc_f, training=True)
        sym_b = quantize_latent(m_b, enc_b, training=True)
        deq_f = dequantize_latent(sym_f, dec_f)
        deq_b = dequantize_latent(sym_b, dec_b)
        _, hyper_feat, motion_hyper_bits = self.motion_entropy.hyper_forward_train(deq_f, deq_b)
        motion_bits = motion_hyper_bits + self.motion_entropy.bits_train(
            sym_f, sym_b, deq_f, deq_b, hyper_feat, motion_prior)

        r_f, r_b = self.motion_ae.decode(deq_f, deq_b)
        v_hat_f = r_f + pred_f
        v_hat_b = r_b + pred_b
        ctx_fwd, ctx_back = self._contexts_from_motion(ref_fwd, ref_back, v_hat_f, v_hat_b)

        y = self.ctx_encoder(x_t, ctx_fwd, ctx_back,
                             use_weighting=self.config.weighted_context_fusion)
        enc_y, dec_y = self.ctx_steps.steps(rate_index)
        sym_y = quantize_latent(y, enc_y, training=True)
        deq_y = dequantize_latent(sym_y, dec_y)
        _, hyper_feat_y, ctx_hyper_bits = self.ctx_entropy.hyper_forward_train(y)
        prior = self._context_prior(ref_fwd, ref_back, ctx_fwd, ctx_back, sym_y.shape)
        refined = self.ctx_entropy.refined_prior(hyper_feat_y, prior)
        context_bits = ctx_hyper_bits + self.ctx_entropy.bits_train(
            sym_y, deq_y, hyper_feat_y, refined)

        x_hat, feature = self.ctx_decoder(deq_y, ctx_fwd, ctx_back,
                                          use_weighting=self.config.weighted_context_fusion)
        return {
            "x_hat": x_hat,
            "state": RefState(x_hat, feature, deq_y),
            "bits_motion": motion_bits,
            "bits_context": context_bits,
            "bits_total": motion_bits + context_bits,
            "v_hat_fwd": v_hat_f,
            "v_hat_back": v_hat_b,
            "mvd_fwd": mvd_f,
            "mvd_back": mvd_b,
            "mvd_hat_fwd": r_f,
            "mvd_hat_back": r_b,
        }

    # ---- lossless coding path ----------------------------------------------

    @torch.no_grad()
    def encode_b_frame(self, x_t: torch.Tensor, ref_fwd: RefState,
                       ref_back: RefState, rate_index: int, frame_indices=None):
        """Returns (chunks dict, propagated RefState, encoder-side symbols)."""
        validate_rate_index(rate_index)
        self._sync_flags()
        t_idx, f_idx, b_idx = frame_indices or (None, None, None)
        pred_f, pred_b, motion_prior = self._shared_b_frame_prep(
            ref_fwd, ref_back, f_idx, b_idx)
        v_tf, v_tb = self._flow_pair(
            x_t, ref_fwd.frame, x_t, ref_back.frame,
            indices=((t_idx, f_idx), (t_idx, b_idx)))
        m_f, m_b = self.motion_ae.encode(v_tf - pred_f, v_tb - pred_b)
        steps_f, steps_b = self.motion_steps.steps(
            rate_index, shared=self.config.shared_direction_steps)
        mh_bytes, ml_bytes, deq_f, deq_b, motion_est_bits = \
            self.motion_entropy.encode_latents(m_f, m_b, steps_f, steps_b, motion_prior)
        sym_f = quantize_latent(m_f, steps_f[0], training=False)
        sym_b = quantize_latent(m_b, steps_b[0], training=False)

        r_f, r_b = self.motion_ae.decode(deq_f, deq_b)
        ctx_fwd, ctx_back = self._contexts_from_motion(
            ref_fwd, ref_back, r_f + pred_f, r_b + pred_b)

        y = self.ctx_encoder(x_t, ctx_fwd, ctx_back,
                             use_weighting=self.config.weighted_context_fusion)
        prior = self._context_prior(ref_fwd, ref_back, ctx_fwd, ctx_back,
                                    self._latent_shape(x_t.shape))
        ch_bytes, cl_bytes, deq_y, ctx_est_bits, sym_y = self.ctx_entropy.encode_latent(
            y, self.ctx_steps.steps(rate_index), prior)

        x_hat, feature = self.ctx_decoder(deq_y, ctx_fwd, ctx_back,
                                          use_weighting=self.config.weighted_context_fusion)
        chunks = {
            CHUNK_MOTION_HYPER: mh_bytes,
            CHUNK_MOTION_LATENT: ml_bytes,
            CHUNK_CTX_HYPER: ch_bytes,
            CHUNK_CTX_LATENT: cl_bytes,
        }
        symbols = {"motion_fwd": sym_f, "motion_back": sym_b, "context": sym_y}
        stats = {"estimated_bits": motion_est_bits + ctx_est_bits}
        return chunks, RefState(x_hat, feature, deq_y), symbols, stats

    @torch.no_grad()
    def decode_b_frame(self, chunks, ref_fwd: RefState, ref_back: RefState,
                       rate_index: int, frame_shape, frame_indices=None):
        validate_rate_index(rate_index)
        self._sync_flags()
        _, f_idx, b_idx = frame_indices or (None, None, None)
        pred_f, pred_b, motion_prior = self._shared_b_frame_prep(
            ref_fwd, ref_back, f_idx, b_idx)
        steps_f, steps_b = self.motion_steps.steps(
            rate_index, shared=self.config.shared_direction_steps)
        b, _, h, w = frame_shape
        motion_shape = (b, self.config.motion_latent_channels, h // 16, w // 16)
        deq_f, deq_b, sym_f, sym_b = self.motion_entropy.decode_latents(
            chunks[CHUNK_MOTION_HYPER], chunks[CHUNK_MOTION_LATENT],
            steps_f, steps_b, motion_prior, motion_shape)

        r_f, r_b = self.motion_ae.decode(deq_f, deq_b)
        ctx_fwd, ctx_back = self._contexts_from_motion(
            ref_fwd, ref_back, r_f + pred_f, r_b + pred_b)
        prior = self._context_prior(ref_fwd, ref_back, ctx_fwd, ctx_back,
                                    self._latent_shape(frame_shape))
        deq_y, sym_y = self.ctx_entropy.decode_latent(
            chunks[CHUNK_CTX_HYPER], chunks[CHUNK_CTX_LATENT],
            self.ctx_steps.steps(rate_index), prior, self._latent_shape(frame_shape))
        x_hat, feature = self.ctx_decoder(deq_y, ctx_fwd, ctx_back,
                                          use_weighting=self.config.weighted_context_fusion)
        symbols = {"motion_fwd": sym_f, "motion_back": sym_b, "context": sym_y}
        return RefState(x_hat, feature, deq_y), symbols

    # ---- intra frames --------------------------------------------------------

    @torch.no_grad()
    def encode_intra(self, padded: torch.Tensor, original_size, rate_index=0):
        payload = self.intra_codec.encode(padded, original_size, rate_index)
        decoded = self.intra_codec.decode(payload, padded.shape[-2:], rate_index)
        state = self.intra_state(decoded.unsqueeze(0))
        return payload, state

    @torch.no_grad()
    def decode_intra(self, payload: bytes, padded_size, rate_index=0):
        decoded = self.intra_codec.decode(payload, padded_size, rate_index)
        return self.intra_state(decoded.unsqueeze(0))

    def intra_state(self, decoded_frame: torch.Tensor) -> RefState:
        return RefState(decoded_frame, self.intra_feature(decoded_frame), None)


# ---- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def model_hash(state_dict) -> bytes:
    digest = hashlib.sha256()
    for name in sorted(state_dict):
        digest.update(name.encode())
        digest.update(state_dict[name].detach().cpu().numpy().tobytes())
    return digest.digest()[:8]


def save_checkpoint(model: BFrameCodec, path):
    state = model.state_dict()
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": state,
        "model_hash": model_hash(state),
    }, path)


def load_checkpoint(path) -> BFrameCodec:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ShapeMismatchError(
            f"unsupported checkpoint version {blob.get('format_version')}")
    model = BFrameCodec(ModelConfig.from_dict(blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
