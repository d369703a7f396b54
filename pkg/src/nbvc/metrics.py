"""Rate-distortion metrics: PSNR, per-sequence rate points, BD-rate."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate

from .errors import MetricError

PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr_db: float


def psnr(x, x_hat) -> float:
    """RGB PSNR in the 8-bit domain on equal-size (cropped) frames."""
    import torch

    a = x.pixels if hasattr(x, "pixels") else x
    b = x_hat.pixels if hasattr(x_hat, "pixels") else x_hat
    if a.shape != b.shape:
        raise MetricError(f"psnr shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    a8 = torch.round(a.clamp(0, 1) * 255.0)
    b8 = torch.round(b.clamp(0, 1) * 255.0)
    mse = torch.mean((a8 - b8) ** 2).item()
    if mse == 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(255.0 ** 2 / mse))


def sequence_psnr(ref_frames, dist_frames) -> float:
    if len(ref_frames) != len(dist_frames):
        raise MetricError(f"frame count mismatch: {len(ref_frames)} vs {len(dist_frames)}")
    return float(np.mean([psnr(a, b) for a, b in zip(ref_frames, dist_frames)]))


def bpp_of_stream(stream_bytes: int, width: int, height: int, frame_count: int) -> float:
    """Total stream bits over original pixels; container headers included."""
    return stream_bytes * 8.0 / (width * height * frame_count)


def _curve(points):
    pts = sorted(points, key=lambda p: p.psnr_db)
    q = np.array([p.psnr_db for p in pts], dtype=np.float64)
    r = np.array([p.bpp for p in pts], dtype=np.float64)
    if len(pts) < 4:
        raise MetricError("bd_rate needs at least 4 points per curve")
    if (np.diff(q) <= 0).any():
        raise MetricError("bd_rate needs strictly increasing quality values")
    if (r <= 0).any():
        raise MetricError("bd_rate needs positive rates")
    return q, np.log10(r)


def bd_rate(anchor, test, samples=1000) -> float:
    """Average rate difference (%) of ``test`` vs ``anchor`` at equal quality.

    Piecewise-cubic (PCHIP) fit of log10-rate over PSNR, integrated over the
    overlapping PSNR interval; negative values mean the test codec saves rate.
    """
    qa, ra = _curve(anchor)
    qt, rt = _curve(test)
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise MetricError("bd_rate curves have no PSNR overlap")
    grid, step = np.linspace(lo, hi, samples, retstep=True)
    fa = interpolate.PchipInterpolator(qa, ra)(grid)
    ft = interpolate.PchipInterpolator(qt, rt)(grid)
    avg_diff = np.trapezoid(ft - fa, dx=step) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)
