"""Sequence-level encode/decode: GOP plan -> per-frame coding -> container."""

import torch

from .container import (CHUNK_CTX_HYPER, CHUNK_CTX_LATENT, CHUNK_INTRA,
                        CHUNK_MOTION_HYPER, CHUNK_MOTION_LATENT,
                        FLAG_LEARNED_INTRA, FRAME_TYPE_B, FRAME_TYPE_I,
                        ContainerHeader, FrameRecord, read_stream, write_stream)
from .core_types import Frame, pad_to_stride, padded_extent
from .errors import ContainerFormatError, ModelHashMismatch, ShapeMismatchError
from .gop import FRAME_I, build_gop_plan
from .model import BFrameCodec, model_hash

B_CHUNK_IDS = (CHUNK_MOTION_HYPER, CHUNK_MOTION_LATENT,
               CHUNK_CTX_HYPER, CHUNK_CTX_LATENT)


@torch.no_grad()
def encode_sequence(model: BFrameCodec, frames, intra_period: int,
                    rate_index: int) -> bytes:
    if not frames:
        raise ShapeMismatchError("no frames to encode")
    model.eval()
    oh, ow = frames[0].height, frames[0].width
    padded = []
    for f in frames:
        if (f.height, f.width) != (oh, ow):
            raise ShapeMismatchError("inconsistent frame sizes in sequence")
        padded.append(pad_to_stride(f))

    plan = build_gop_plan(len(frames), intra_period)
    states = {}
    records = []
    for entry in plan.entries:
        px = padded[entry.frame_index].pixels
        if entry.frame_type == FRAME_I:
            payload, state = model.encode_intra(px, (oh, ow), rate_index)
            records.append(FrameRecord(entry.frame_index, FRAME_TYPE_I,
                                       [(CHUNK_INTRA, payload)]))
        else:
            chunks, state, _, _ = model.encode_b_frame(
                px.unsqueeze(0), states[entry.forward_ref],
                states[entry.backward_ref], rate_index,
                frame_indices=(entry.frame_index, entry.forward_ref,
                               entry.backward_ref))
            records.append(FrameRecord(entry.frame_index, FRAME_TYPE_B,
                                       [(cid, chunks[cid]) for cid in B_CHUNK_IDS]))
        states[entry.frame_index] = state

    flags = FLAG_LEARNED_INTRA if model.config.intra_mode == "learned" else 0
    header = ContainerHeader(
        width=ow, height=oh, frame_count=len(frames), intra_period=intra_period,
        rate_index=rate_index, model_hash=model_hash(model.state_dict()),
        flags=flags,
    )
    return write_stream(header, records)


@torch.no_grad()
def decode_sequence(model: BFrameCodec, data: bytes, allow_hash_mismatch=False):
    """Returns (frames in display order, header)."""
    model.eval()
    header, records = read_stream(data)
    own_hash = model_hash(model.state_dict())
    if header.model_hash != own_hash:
        if not allow_hash_mismatch:
            raise ModelHashMismatch(
                "stream was produced by a different checkpoint "
                f"({header.model_hash.hex()} != {own_hash.hex()})")
        import warnings

        warnings.warn("decoding with a mismatched checkpoint", stacklevel=2)

    oh, ow = header.height, header.width
    ph, pw = padded_extent(oh, 64), padded_extent(ow, 64)
    plan = build_gop_plan(header.frame_count, header.intra_period)
    entry_by_index = {e.frame_index: e for e in plan.entries}

    states = {}
    decoded = {}
    for rec in records:
        entry = entry_by_index.get(rec.frame_index)
        if entry is None:
            raise ContainerFormatError(f"record for unplanned frame {rec.frame_index}")
        known = {cid: payload for cid, payload in rec.chunks}
        if rec.frame_type == FRAME_TYPE_I:
            if CHUNK_INTRA not in known:
                raise ContainerFormatError(f"intra frame {rec.frame_index} missing chunk")
            state = model.decode_intra(known[CHUNK_INTRA], (ph, pw), header.rate_index)
        else:
            missing = [cid for cid in B_CHUNK_IDS if cid not in known]
            if missing:
                raise ContainerFormatError(
                    f"frame {rec.frame_index} missing chunks {missing}")
            state, _ = model.decode_b_frame(
                {cid: known[cid] for cid in B_CHUNK_IDS},
                states[entry.forward_ref], states[entry.backward_ref],
                header.rate_index, (1, 3, ph, pw),
                frame_indices=(entry.frame_index, entry.forward_ref,
                               entry.backward_ref))
        states[rec.frame_index] = state
        decoded[rec.frame_index] = state.frame.squeeze(0)[:, :oh, :ow].contiguous()

    if set(decoded) != set(range(header.frame_count)):
        raise ContainerFormatError("stream does not decode every planned frame")
    frames = [Frame(decoded[i], frame_index=i, original_size=(oh, ow))
              for i in range(header.frame_count)]
    return frames, header
