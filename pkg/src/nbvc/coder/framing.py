"""Flat little-endian buffer framing for coder interop.

One request/response shape is shared by the in-process foreign-call boundary,
the subprocess pipe transport, and the golden byte fixtures:

    request  := u8 op | body
      op=1 encode: u32 n_sym | u32 n_tab | tables | u32 idx[n_sym] | i32 sym[n_sym]
      op=2 decode: u32 n_sym | u32 n_tab | tables | u32 idx[n_sym]
                   | u32 stream_len | stream bytes
    table    := i16 k_min | i16 k_max | u16 n_entries | u16 entries[n_entries]
                (the final cumulative value 65536 is stored as 0)
    response := u8 status
      status=0 encode: u32 n_bytes | bytes
      status=0 decode: u32 n_sym | i32 sym[n_sym]
      status=1 error:  u32 offset | u32 msg_len | msg bytes
"""

import struct

import numpy as np

from ..errors import CoderError, DecodeError
from .range_coder import decode_symbols, encode_symbols
from .tables import CDF_TOTAL, TableBatch

OP_SHUTDOWN = 0
OP_ENCODE = 1
OP_DECODE = 2
STATUS_OK = 0
STATUS_ERROR = 1


def serialize_tables(batch: TableBatch) -> bytes:
    n, width = batch.entries.shape
    wire = batch.entries.astype(np.uint32)
    wire = np.where(wire == CDF_TOTAL, 0, wire).astype("<u2")
    header = struct.pack("<hhH", batch.k_min, batch.k_max, width)
    parts = []
    for i in range(n):
        parts.append(header)
        parts.append(wire[i].tobytes())
    return b"".join(parts)


def _parse_tables(buf, off, n_tab):
    k_min = k_max = width = None
    rows = []
    for _ in range(n_tab):
        if off + 6 > len(buf):
            raise CoderError("truncated table header")
        tk_min, tk_max, tn = struct.unpack_from("<hhH", buf, off)
        off += 6
        if k_min is None:
            k_min, k_max, width = tk_min, tk_max, tn
        elif (tk_min, tk_max, tn) != (k_min, k_max, width):
            raise CoderError("mixed table windows in one request")
        end = off + 2 * tn
        if end > len(buf):
            raise CoderError("truncated table entries")
        row = np.frombuffer(buf, dtype="<u2", count=tn, offset=off).astype(np.int64)
        off = end
        rows.append(row)
    entries = np.stack(rows)
    entries[:, -1] = CDF_TOTAL
    return TableBatch(k_min=k_min, k_max=k_max, entries=entries), off


def build_encode_request(symbols, batch: TableBatch, table_idx) -> bytes:
    symbols = np.asarray(symbols, dtype="<i4").ravel()
    table_idx = np.asarray(table_idx, dtype="<u4").ravel()
    return b"".join([
        struct.pack("<BII", OP_ENCODE, len(symbols), batch.num_tables),
        serialize_tables(batch),
        table_idx.tobytes(),
        symbols.tobytes(),
    ])


def build_decode_request(stream: bytes, batch: TableBatch, table_idx, n_symbols) -> bytes:
    table_idx = np.asarray(table_idx, dtype="<u4").ravel()
    return b"".join([
        struct.pack("<BII", OP_DECODE, n_symbols, batch.num_tables),
        serialize_tables(batch),
        table_idx.tobytes(),
        struct.pack("<I", len(stream)),
        stream,
    ])


def parse_response(resp: bytes, op: int):
    if not resp:
        raise CoderError("empty coder response")
    status = resp[0]
    if status == STATUS_ERROR:
        offset, msg_len = struct.unpack_from("<II", resp, 1)
        msg = resp[9:9 + msg_len].decode("utf-8", "replace")
        raise DecodeError(msg, offset=offset)
    if op == OP_ENCODE:
        (n_bytes,) = struct.unpack_from("<I", resp, 1)
        return resp[5:5 + n_bytes]
    (n_sym,) = struct.unpack_from("<I", resp, 1)
    return np.frombuffer(resp, dtype="<i4", count=n_sym, offset=5).astype(np.int64)


def handle_request(req: bytes) -> bytes:
    """Serve one framed request with the local Python coder."""
    try:
        if not req:
            raise CoderError("empty request")
        op = req[0]
        if op not in (OP_ENCODE, OP_DECODE):
            raise CoderError(f"unknown op {op}")
        n_sym, n_tab = struct.unpack_from("<II", req, 1)
        batch, off = _parse_tables(req, 9, n_tab)
        idx = np.frombuffer(req, dtype="<u4", count=n_sym, offset=off).astype(np.int64)
        off += 4 * n_sym
        if op == OP_ENCODE:
            syms = np.frombuffer(req, dtype="<i4", count=n_sym, offset=off).astype(np.int64)
            data = encode_symbols(syms, batch, idx)
            return struct.pack("<BI", STATUS_OK, len(data)) + data
        (stream_len,) = struct.unpack_from("<I", req, off)
        off += 4
        stream = req[off:off + stream_len]
        syms = decode_symbols(stream, batch, idx)
        return (struct.pack("<BI", STATUS_OK, len(syms))
                + syms.astype("<i4").tobytes())
    except DecodeError as exc:
        msg = str(exc).encode()
        return struct.pack("<BII", STATUS_ERROR, exc.offset, len(msg)) + msg
    except Exception as exc:  # contract errors surface as offset-0 failures
        msg = str(exc).encode()
        return struct.pack("<BII", STATUS_ERROR, 0, len(msg)) + msg
