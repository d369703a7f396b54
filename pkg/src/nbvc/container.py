"""Byte-exact .nvb container: header plus per-frame entropy chunks in coding
order. Unknown chunk ids are skipped by length and preserved on rewrite."""

import struct
from dataclasses import dataclass, field

from .errors import ContainerFormatError

MAGIC = b"NBVC"
VERSION = 1
HEADER_FMT = "<4sBIIIIB8sH"
HEADER_SIZE = struct.calcsize(HEADER_FMT)

CHUNK_INTRA = 0
CHUNK_MOTION_HYPER = 1
CHUNK_MOTION_LATENT = 2
CHUNK_CTX_HYPER = 3
CHUNK_CTX_LATENT = 4

FLAG_LEARNED_INTRA = 1 << 0

FRAME_TYPE_I = 0
FRAME_TYPE_B = 1


@dataclass
class ContainerHeader:
    width: int
    height: int
    frame_count: int
    intra_period: int
    rate_index: int
    model_hash: bytes = b"\x00" * 8
    flags: int = 0
    version: int = VERSION

    def __post_init__(self):
        if len(self.model_hash) != 8:
            raise ContainerFormatError("model_hash must be 8 bytes")


@dataclass
class FrameRecord:
    frame_index: int
    frame_type: int
    chunks: list = field(default_factory=list)  # [(chunk_id, bytes), ...]


def write_stream(header: ContainerHeader, records) -> bytes:
    out = bytearray()
    out += struct.pack(
        HEADER_FMT, MAGIC, header.version, header.width, header.height,
        header.frame_count, header.intra_period, header.rate_index,
        header.model_hash, header.flags,
    )
    for rec in records:
        if len(rec.chunks) > 255:
            raise ContainerFormatError("too many chunks in one frame record")
        out += struct.pack("<IBB", rec.frame_index, rec.frame_type, len(rec.chunks))
        for chunk_id, data in rec.chunks:
            out += struct.pack("<BI", chunk_id, len(data))
            out += data
    return bytes(out)


def read_stream(data: bytes):
    if len(data) < HEADER_SIZE:
        raise ContainerFormatError("stream shorter than header")
    magic, version, width, height, frame_count, intra_period, rate_index, \
        model_hash, flags = struct.unpack_from(HEADER_FMT, data, 0)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version}")
    header = ContainerHeader(width=width, height=height, frame_count=frame_count,
                             intra_period=intra_period, rate_index=rate_index,
                             model_hash=model_hash, flags=flags, version=version)
    records = []
    off = HEADER_SIZE
    while off < len(data):
        if off + 6 > len(data):
            raise ContainerFormatError("truncated frame record header")
        frame_index, frame_type, n_chunks = struct.unpack_from("<IBB", data, off)
        off += 6
        chunks = []
        for _ in range(n_chunks):
            if off + 5 > len(data):
                raise ContainerFormatError("truncated chunk header")
            chunk_id, length = struct.unpack_from("<BI", data, off)
            off += 5
            if off + length > len(data):
                raise ContainerFormatError("truncated chunk payload")
            chunks.append((chunk_id, data[off:off + length]))
            off += length
        records.append(FrameRecord(frame_index=frame_index, frame_type=frame_type,
                                   chunks=chunks))
    return header, records


def known_chunks(record: FrameRecord, wanted_ids):
    """Chunks with the given ids, in record order; unknown ids are ignored."""
    by_id = {}
    for chunk_id, payload in record.chunks:
        if chunk_id in wanted_ids and chunk_id not in by_id:
            by_id[chunk_id] = payload
    missing = set(wanted_ids) - set(by_id)
    if missing:
        raise ContainerFormatError(
            f"frame {record.frame_index} is missing chunks {sorted(missing)}")
    return [by_id[i] for i in wanted_ids]
