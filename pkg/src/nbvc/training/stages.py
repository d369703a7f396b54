"""Staged rate-distortion training at configurable scale.

Stages: ``motion-warmup`` (motion path only, warp-based distortion),
``single-frame-e2e`` (full pipeline, one B frame, fixed middle lambda),
``multi-rate`` (rate index sampled uniformly per step), and ``cascaded``
(3 -> 5 -> 7 frame unrolls with decoded, detached outputs feeding forward).
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from ..core_types import (Frame, lambda_for_rate_index, pad_to_stride)
from ..errors import ShapeMismatchError
from ..gop import FRAME_I, build_gop_plan
from ..layers import dequantize_latent, quantize_latent
from ..model import BFrameCodec, RefState
from ..motion_toolkit import warp_tensor
from .loss import TrainingConfig, guard_finite, rd_loss

MIDDLE_RATE_INDEX = 1  # lambda 380

# Fractions of cascaded-stage steps spent at each unroll length.
CASCADE_SCHEDULE = ((3, 0.5), (5, 0.3), (7, 0.2))


@dataclass
class StageReport:
    stage: str
    losses: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def record(self, **values):
        for key, value in values.items():
            if torch.is_tensor(value):
                value = value.detach()
            self.metrics.setdefault(key, []).append(float(value))

    def moving_average(self, window=100, key=None):
        vals = np.asarray(self.losses if key is None else self.metrics[key],
                          dtype=np.float64)
        if len(vals) < window:
            return vals.mean(keepdims=True) if len(vals) else np.zeros(1)
        kernel = np.ones(window) / window
        return np.convolve(vals, kernel, mode="valid")


def _pad_sequence(seq: torch.Tensor) -> torch.Tensor:
    frames = [pad_to_stride(Frame(seq[i], frame_index=i)).pixels for i in range(seq.shape[0])]
    return torch.stack(frames)


def motion_train_step(model: BFrameCodec, x_fwd, x_cur, x_back, rate_index):
    """Motion-path-only pass; distortion is warp error against both refs."""
    model._sync_flags()
    v_bf = model._flow(x_back, x_fwd)
    v_fb = model._flow(x_fwd, x_back)
    pred_f, pred_b = v_bf / 2, v_fb / 2
    prior = model.motion_entropy.temporal_prior(v_bf, v_fb)
    v_tf = model._flow(x_cur, x_fwd)
    v_tb = model._flow(x_cur, x_back)
    mvd_f, mvd_b = v_tf - pred_f, v_tb - pred_b
    m_f, m_b = model.motion_ae.encode(mvd_f, mvd_b)
    (enc_f, dec_f), (enc_b, dec_b) = model.motion_steps.steps(
        rate_index, shared=model.config.shared_direction_steps)
    sym_f = quantize_latent(m_f, enc_f, training=model.training)
    sym_b = quantize_latent(m_b, enc_b, training=model.training)
    deq_f = dequantize_latent(sym_f, dec_f)
    deq_b = dequantize_latent(sym_b, dec_b)
    _, hyper_feat, hyper_bits = model.motion_entropy.hyper_forward_train(deq_f, deq_b)
    bits = hyper_bits + model.motion_entropy.bits_train(
        sym_f, sym_b, deq_f, deq_b, hyper_feat, prior)
    r_f, r_b = model.motion_ae.decode(deq_f, deq_b)
    v_hat_f, v_hat_b = r_f + pred_f, r_b + pred_b
    warped_f = warp_tensor(x_fwd, v_hat_f)
    warped_b = warp_tensor(x_back, v_hat_b)
    mse = 0.5 * (torch.mean((warped_f - x_cur) ** 2)
                 + torch.mean((warped_b - x_cur) ** 2))
    return {
        "mse": mse, "bits": bits,
        "mvd": (mvd_f, mvd_b), "mvd_hat": (r_f, r_b),
        "v_hat": (v_hat_f, v_hat_b),
    }


def _intra_term(model, x, lam, rate_index):
    recon, bits = model.intra_codec.forward_train(x, rate_index)
    return rd_loss(x, recon, bits, lam), recon


def _cascade_length(config, step):
    frac = step / max(1, config.steps)
    acc = 0.0
    for length, share in CASCADE_SCHEDULE:
        acc += share
        if frac < acc:
            return length
    return CASCADE_SCHEDULE[-1][0]


def _stage_loss(model, config, stage, seq, rng, step, report):
    h, w = seq.shape[-2:]
    if stage == "motion-warmup":
        lam = lambda_for_rate_index(MIDDLE_RATE_INDEX)
        out = motion_train_step(model, seq[0:1], seq[1:2], seq[2:3], MIDDLE_RATE_INDEX)
        with torch.no_grad():
            mvd_err = 0.5 * (
                torch.mean(torch.abs(out["mvd"][0] - out["mvd_hat"][0]))
                + torch.mean(torch.abs(out["mvd"][1] - out["mvd_hat"][1])))
        report.record(mse=out["mse"], mvd_err=mvd_err)
        return lam * out["mse"] + out["bits"] / (h * w)

    if stage in ("single-frame-e2e", "multi-rate"):
        rate_index = (MIDDLE_RATE_INDEX if stage == "single-frame-e2e"
                      else int(rng.integers(0, 4)))
        lam = lambda_for_rate_index(rate_index)
        # One batched pass derives both ground-truth reference features.
        both = model.intra_state(torch.cat([seq[0:1], seq[2:3]]))
        ref_f = RefState(both.frame[0:1], both.feature[0:1])
        ref_b = RefState(both.frame[1:2], both.feature[1:2])
        out = model.b_frame_train(seq[1:2], ref_f, ref_b, rate_index)
        loss = rd_loss(seq[1:2], out["x_hat"], out["bits_total"], lam)
        report.record(mse=torch.mean((seq[1:2] - out["x_hat"]) ** 2))
        if model.config.intra_mode == "learned":
            ref = seq[0:1] if step % 2 == 0 else seq[2:3]
            intra_loss, _ = _intra_term(model, ref, lam, rate_index)
            loss = loss + intra_loss
        return loss

    if stage == "cascaded":
        length = min(_cascade_length(config, step), config.sequence_length, seq.shape[0])
        rate_index = int(rng.integers(0, 4))
        lam = lambda_for_rate_index(rate_index)
        plan = build_gop_plan(length, length - 1)
        states = {}
        total = seq.new_zeros(())
        weight_sum = 0.0
        for entry in plan.entries:
            x = seq[entry.frame_index:entry.frame_index + 1]
            weight = config.level_weight(entry.level)
            if entry.frame_type == FRAME_I:
                if model.config.intra_mode == "learned":
                    intra_loss, recon = _intra_term(model, x, lam, rate_index)
                    total = total + weight * intra_loss
                    weight_sum += weight
                    state = model.intra_state(recon.detach())
                else:
                    # Lossless intra: zero trainable cost, exact reference.
                    state = model.intra_state(x)
            else:
                out = model.b_frame_train(
                    x, states[entry.forward_ref], states[entry.backward_ref],
                    rate_index)
                total = total + weight * rd_loss(x, out["x_hat"], out["bits_total"], lam)
                weight_sum += weight
                state = out["state"].detached()
            states[entry.frame_index] = state
        return total / max(weight_sum, 1.0)

    raise ShapeMismatchError(f"unknown stage {stage!r}")


def run_stage(model: BFrameCodec, config: TrainingConfig, dataset) -> StageReport:
    """Optimize the model for one stage; aborts on non-finite loss."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    report = StageReport(stage=config.stage)
    seq_len = config.sequence_length if config.stage == "cascaded" else 3
    for step in range(config.steps):
        seq = dataset.sample(rng, seq_len, config.crop_size)
        seq = _pad_sequence(seq)
        loss = _stage_loss(model, config, config.stage, seq, rng, step, report)
        guard_finite(loss, step)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        if config.grad_clip_norm:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
        optimizer.step()
        report.losses.append(float(loss.detach()))
    model.eval()
    return report
