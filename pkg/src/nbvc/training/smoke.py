"""Desk-scale overfit experiment: train the tiny model on one synthetic clip
through all four stages, then measure the rate ladder end to end."""

import time
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..codec import decode_sequence, encode_sequence
from ..core_types import Frame, NUM_RATE_POINTS
from ..gop import FRAME_I, build_gop_plan
from ..metrics import bpp_of_stream, psnr
from ..model import BFrameCodec, ModelConfig
from .data import ClipDataset
from .loss import TrainingConfig
from .stages import run_stage

CLIP_FRAMES = 7
CLIP_HEIGHT = 64
CLIP_WIDTH = 96


def make_synthetic_clip(frames=CLIP_FRAMES, height=CLIP_HEIGHT, width=CLIP_WIDTH,
                        seed=0, shift_per_frame=(2, 1)) -> torch.Tensor:
    """Smooth random texture translating at a constant velocity."""
    g = torch.Generator().manual_seed(seed)
    dx, dy = shift_per_frame
    pad_x, pad_y = abs(dx) * frames + 8, abs(dy) * frames + 8
    canvas = torch.rand(3, height + 2 * pad_y, width + 2 * pad_x, generator=g)
    canvas = F.avg_pool2d(canvas.unsqueeze(0), 5, stride=1, padding=2).squeeze(0)
    canvas = F.avg_pool2d(canvas.unsqueeze(0), 5, stride=1, padding=2).squeeze(0)
    lo, hi = canvas.min(), canvas.max()
    canvas = 0.03 + 0.94 * (canvas - lo) / (hi - lo)
    out = []
    for t in range(frames):
        y0 = pad_y + t * dy
        x0 = pad_x + t * dx
        out.append(canvas[:, y0:y0 + height, x0:x0 + width].clone())
    return torch.stack(out)


@dataclass
class SmokeResult:
    reports: dict = field(default_factory=dict)
    bpp: dict = field(default_factory=dict)
    mse: dict = field(default_factory=dict)
    psnr_all: dict = field(default_factory=dict)
    psnr_b_only: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    stage_seconds: dict = field(default_factory=dict)
    model: object = None


def evaluate_ladder(model: BFrameCodec, clip: torch.Tensor, intra_period=6):
    """Encode/decode the clip at every rate point; returns per-rate stats."""
    frames = [Frame(clip[i], frame_index=i,
                    original_size=(clip.shape[2], clip.shape[3]))
              for i in range(clip.shape[0])]
    plan = build_gop_plan(len(frames), intra_period)
    b_indices = [e.frame_index for e in plan.entries if e.frame_type != FRAME_I]
    stats = {}
    for rate_index in range(NUM_RATE_POINTS):
        data = encode_sequence(model, frames, intra_period, rate_index)
        decoded, header = decode_sequence(model, data)
        per_frame_psnr = [psnr(frames[i], decoded[i]) for i in range(len(frames))]
        mse = float(torch.mean(torch.stack(
            [(frames[i].pixels - decoded[i].pixels) ** 2 for i in range(len(frames))])))
        stats[rate_index] = {
            "bpp": bpp_of_stream(len(data), header.width, header.height,
                                 header.frame_count),
            "mse": mse,
            "psnr_all": sum(per_frame_psnr) / len(per_frame_psnr),
            "psnr_b_only": sum(per_frame_psnr[i] for i in b_indices) / len(b_indices),
        }
    return stats


def run_rd_smoke(steps_per_stage=2000, seed=0, clip=None,
                 learning_rate=1e-3, verbose=True) -> SmokeResult:
    t_start = time.time()
    torch.manual_seed(seed)
    if clip is None:
        clip = make_synthetic_clip(seed=seed)
    dataset = ClipDataset(clip)
    model = BFrameCodec(ModelConfig.tiny(intra_mode="learned"))
    result = SmokeResult()
    for stage in ("motion-warmup", "single-frame-e2e", "multi-rate", "cascaded"):
        cfg = TrainingConfig(stage=stage, steps=steps_per_stage, seed=seed,
                             sequence_length=7, learning_rate=learning_rate)
        t0 = time.time()
        result.reports[stage] = run_stage(model, cfg, dataset)
        result.stage_seconds[stage] = time.time() - t0
        if verbose:
            ma = result.reports[stage].moving_average()
            print(f"[stage {stage}] {steps_per_stage} steps in "
                  f"{result.stage_seconds[stage]:.0f}s; "
                  f"loss MA {ma[0]:.4f} -> {ma[-1]:.4f}", flush=True)
    ladder = evaluate_ladder(model, clip)
    for idx, entry in ladder.items():
        result.bpp[idx] = entry["bpp"]
        result.mse[idx] = entry["mse"]
        result.psnr_all[idx] = entry["psnr_all"]
        result.psnr_b_only[idx] = entry["psnr_b_only"]
        if verbose:
            print(f"[rate {idx}] bpp={entry['bpp']:.4f} "
                  f"psnr={entry['psnr_all']:.2f} dB "
                  f"(B-only {entry['psnr_b_only']:.2f} dB)", flush=True)
    result.runtime_seconds = time.time() - t_start
    result.model = model
    return result
