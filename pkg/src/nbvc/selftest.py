"""Fast invariant suites behind ``nbvc selftest``."""

import numpy as np
import torch


def _check_pad_crop():
    from .core_types import Frame, crop_to_original, pad_to_stride

    for size in range(1, 130):
        px = torch.rand(3, size, size)
        frame = Frame(px, original_size=(size, size))
        padded = pad_to_stride(frame)
        assert padded.height % 64 == 0 and padded.width % 64 == 0
        back = crop_to_original(padded)
        assert torch.equal(back.pixels, px)


def _check_coder_roundtrip():
    from .coder import build_laplace_cdf_batch, decode_symbols, encode_symbols

    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 400))
        mu = rng.normal(0, 3, n)
        sigma = np.exp(rng.normal(0, 1.2, n)).clip(0.01, 64)
        syms = np.round(rng.normal(mu, sigma * 2)).astype(np.int64)
        batch = build_laplace_cdf_batch(mu, sigma)
        data = encode_symbols(syms, batch)
        assert (decode_symbols(data, batch) == syms).all()


def _check_table_contract():
    from .coder import CDF_TOTAL, build_laplace_cdf_batch

    rng = np.random.default_rng(3)
    mu = rng.normal(0, 5, 200)
    sigma = np.exp(rng.normal(0, 1.5, 200)).clip(0.01, 64)
    batch = build_laplace_cdf_batch(mu, sigma)
    e = batch.entries
    assert (e[:, 0] == 0).all() and (e[:, -1] == CDF_TOTAL).all()
    assert (np.diff(e, axis=1) >= 1).all()


def _check_fusion_weights():
    from .context_fusion import FusionWeightPredictor

    torch.manual_seed(0)
    predictor = FusionWeightPredictor(8, 4)
    w_f, w_b = predictor(torch.randn(2, 8, 16, 16) * 5)
    assert torch.equal(w_b, 1.0 - w_f)
    assert ((w_f > 0) & (w_f < 1)).all() and ((w_b > 0) & (w_b < 1)).all()
    assert ((w_f + w_b) == 1.0).all()


def _check_gop_properties():
    from .gop import FRAME_B, build_gop_plan

    for frames in (1, 2, 32, 33, 96, 97):
        plan = build_gop_plan(frames, 32)
        indices = sorted(e.frame_index for e in plan.entries)
        assert indices == list(range(frames))
        coded = set()
        for e in plan.entries:
            if e.frame_type == FRAME_B:
                assert e.forward_ref in coded and e.backward_ref in coded
            coded.add(e.frame_index)


def _check_partition():
    from .motion_entropy import SegmentPartition

    part = SegmentPartition(8)
    masks = part.masks(6, 6)
    total = masks.sum(dim=0)
    assert (total == 1).all()
    assert masks[0].sum() == masks[1].sum() == masks[2].sum() == masks[3].sum()


SUITES = [
    ("pad/crop inverse sweep", _check_pad_crop),
    ("coder round trip", _check_coder_roundtrip),
    ("cdf table contract", _check_table_contract),
    ("fusion weight complement", _check_fusion_weights),
    ("gop plan coverage", _check_gop_properties),
    ("segment partition", _check_partition),
]


def run_selftests(verbose=False) -> int:
    failed = 0
    for name, fn in SUITES:
        try:
            fn()
            if verbose:
                print(f"[ok] {name}")
        except Exception as exc:
            failed += 1
            print(f"[fail] {name}: {exc}")
    return 1 if failed else 0
