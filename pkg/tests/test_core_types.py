import pytest
import torch
from hypothesis import given, strategies as st

from nbvc.core_types import (Frame, LAMBDA_TABLE, crop_to_original,
                             lambda_for_rate_index, pad_to_stride,
                             padded_extent, validate_rate_index)
from nbvc.errors import CropError, IngestionError, ShapeMismatchError


def _frame(h, w, seed=0):
    g = torch.Generator().manual_seed(seed)
    return Frame(torch.rand(3, h, w, generator=g), original_size=(h, w))


class TestPadToStride:
    def test_aligned_input_unchanged(self):
        frame = _frame(64, 64)
        padded = pad_to_stride(frame, 64)
        assert torch.equal(padded.pixels, frame.pixels)
        assert padded.original_size == (64, 64)

    def test_ceiling_to_multiple(self):
        padded = pad_to_stride(_frame(65, 64), 64)
        assert (padded.height, padded.width) == (128, 64)

    def test_hd_padding(self):
        # ceil(1080/64)*64 = 1088 by hand.
        assert padded_extent(1080, 64) == 1088
        padded = pad_to_stride(_frame(1080, 1920), 64)
        assert (padded.height, padded.width) == (1088, 1920)

    def test_border_replication(self):
        frame = _frame(65, 64)
        padded = pad_to_stride(frame, 64)
        assert torch.equal(padded.pixels[:, 65:, :],
                           frame.pixels[:, 64:65, :].expand(3, 63, 64))

    def test_rejects_bad_stride(self):
        with pytest.raises(ShapeMismatchError):
            pad_to_stride(_frame(8, 8), 0)


class TestCropToOriginal:
    def test_pad_then_crop_is_identity(self):
        frame = _frame(100, 70)
        assert torch.equal(crop_to_original(pad_to_stride(frame)).pixels, frame.pixels)

    def test_crop_of_unpadded_is_identity(self):
        frame = _frame(64, 64)
        assert torch.equal(crop_to_original(frame).pixels, frame.pixels)

    def test_hd_case(self):
        frame = _frame(1080, 1920)
        cropped = crop_to_original(pad_to_stride(frame))
        assert (cropped.height, cropped.width) == (1080, 1920)

    def test_missing_record_errors(self):
        frame = Frame(torch.rand(3, 8, 8))
        with pytest.raises(CropError):
            crop_to_original(frame)

    def test_exhaustive_sweep(self):
        for size in range(1, 130):
            frame = _frame(size, size, seed=size)
            back = crop_to_original(pad_to_stride(frame))
            assert torch.equal(back.pixels, frame.pixels), size


@given(h=st.integers(1, 150), w=st.integers(1, 150))
def test_pad_crop_roundtrip_property(h, w):
    frame = Frame(torch.rand(3, h, w), original_size=(h, w))
    padded = pad_to_stride(frame)
    assert padded.height % 64 == 0 and padded.width % 64 == 0
    assert padded.height >= h and padded.width >= w
    assert torch.equal(crop_to_original(padded).pixels, frame.pixels)


class TestFrameValidation:
    def test_rejects_wrong_layout(self):
        with pytest.raises(IngestionError):
            Frame(torch.rand(1, 8, 8))

    def test_rejects_degenerate(self):
        with pytest.raises(IngestionError):
            Frame(torch.rand(3, 0, 8))


class TestRateIndex:
    def test_table_values(self):
        assert LAMBDA_TABLE == (85.0, 170.0, 380.0, 840.0)

    def test_bounds(self):
        for idx in range(4):
            validate_rate_index(idx)
        for bad in (-1, 4, 1.5, "0"):
            with pytest.raises(ShapeMismatchError):
                validate_rate_index(bad)

    def test_mapping_is_bijective_and_quality_ordered(self):
        lams = [lambda_for_rate_index(i) for i in range(4)]
        assert sorted(lams) == sorted(LAMBDA_TABLE)
        # Index 0 is the highest-quality point.
        assert lams[0] == max(LAMBDA_TABLE)
        assert lams == sorted(lams, reverse=True)
