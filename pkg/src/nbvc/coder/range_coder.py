"""Deterministic 32-bit range coder over integer symbols.

Integer-only inside encode/decode; probabilities enter solely through the
quantized CDF tables. Out-of-window symbols are coded via the escape bucket
followed by an order-0 exponential-Golomb code carried as binary decisions
in the same range-coded stream.

Stream layout: u32 LE symbol count, range-coder payload (absent when the
count is zero), u32 LE CRC-32 of the 4 count bytes. Decoding consumes the
payload exactly; the checksum acts as a positioned sentinel against table
mismatches and corruption.
"""

import zlib

import numpy as np

from ..errors import CoderError, DecodeError
from .tables import CDF_TOTAL, TableBatch

MASK = 0xFFFFFFFF
TOP = 1 << 24
BOTTOM = 1 << 16
HALF = CDF_TOTAL // 2


def _count_checksum(count: int) -> int:
    return zlib.crc32(int(count).to_bytes(4, "little")) & MASK


def _escape_value(k, k_min, k_max):
    if k > k_max:
        return 2 * (k - k_max - 1)
    return 2 * (k_min - 1 - k) + 1


def _unescape_value(u, k_min, k_max):
    if u % 2 == 0:
        return k_max + 1 + u // 2
    return k_min - 1 - (u - 1) // 2


class _EncoderCore:
    def __init__(self):
        self.low = 0
        self.range = MASK
        self.out = bytearray()

    def _renorm(self):
        low, rng = self.low, self.range
        while True:
            if (low ^ ((low + rng) & MASK)) < TOP:
                pass
            elif rng < BOTTOM:
                rng = (-low) & (BOTTOM - 1)
            else:
                break
            self.out.append((low >> 24) & 0xFF)
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low, self.range = low, rng

    def encode(self, c_lo, c_hi):
        r = self.range >> 16
        self.low = (self.low + c_lo * r) & MASK
        self.range = (c_hi - c_lo) * r
        self._renorm()

    def encode_bit(self, bit):
        if bit:
            self.encode(HALF, CDF_TOTAL)
        else:
            self.encode(0, HALF)

    def encode_exp_golomb(self, u):
        v = u + 1
        n = v.bit_length()
        for _ in range(n - 1):
            self.encode_bit(0)
        for i in range(n - 1, -1, -1):
            self.encode_bit((v >> i) & 1)

    def finish(self):
        for _ in range(4):
            self.out.append((self.low >> 24) & 0xFF)
            self.low = (self.low << 8) & MASK
        return bytes(self.out)


class _DecoderCore:
    def __init__(self, data, start):
        self.data = data
        self.pos = start
        self.low = 0
        self.range = MASK
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self):
        if self.pos >= len(self.data):
            raise DecodeError("stream truncated", offset=self.pos)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _renorm(self):
        low, rng, code = self.low, self.range, self.code
        while True:
            if (low ^ ((low + rng) & MASK)) < TOP:
                pass
            elif rng < BOTTOM:
                rng = (-low) & (BOTTOM - 1)
            else:
                break
            code = ((code << 8) & MASK) | self._next_byte()
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low, self.range, self.code = low, rng, code

    def decode(self, entries):
        """Decode one bucket index against cumulative ``entries``."""
        r = self.range >> 16
        cum = ((self.code - self.low) & MASK) // r
        if cum >= CDF_TOTAL:
            cum = CDF_TOTAL - 1
        j = int(np.searchsorted(entries, cum, side="right")) - 1
        c_lo, c_hi = int(entries[j]), int(entries[j + 1])
        self.low = (self.low + c_lo * r) & MASK
        self.range = (c_hi - c_lo) * r
        self._renorm()
        return j

    def decode_bit(self):
        r = self.range >> 16
        cum = ((self.code - self.low) & MASK) // r
        bit = 1 if cum >= HALF else 0
        if bit:
            self.low = (self.low + HALF * r) & MASK
            self.range = (CDF_TOTAL - HALF) * r
        else:
            self.range = HALF * r
        self._renorm()
        return bit

    def decode_exp_golomb(self):
        zeros = 0
        while self.decode_bit() == 0:
            zeros += 1
            if zeros > 64:
                raise DecodeError("runaway escape code", offset=self.pos)
        v = 1
        for _ in range(zeros):
            v = (v << 1) | self.decode_bit()
        return v - 1


class StreamEncoder:
    """Accumulates symbol batches into one count-prefixed, checksummed stream."""

    def __init__(self):
        self._core = _EncoderCore()
        self._count = 0

    def put(self, symbols, batch: TableBatch, table_idx=None):
        symbols = np.asarray(symbols, dtype=np.int64).ravel()
        if table_idx is None:
            if batch.num_tables != len(symbols):
                raise CoderError("one table per symbol required")
            table_idx = np.arange(len(symbols))
        else:
            table_idx = np.asarray(table_idx, dtype=np.int64).ravel()
            if len(table_idx) != len(symbols):
                raise CoderError("table_idx length mismatch")
            if len(table_idx) and (table_idx.min() < 0 or table_idx.max() >= batch.num_tables):
                raise CoderError("table_idx out of range")
        entries = batch.entries
        k_min, k_max = batch.k_min, batch.k_max
        escape_bucket = batch.support
        core = self._core
        for sym, ti in zip(symbols.tolist(), table_idx.tolist()):
            row = entries[ti]
            if k_min <= sym <= k_max:
                j = sym - k_min
                core.encode(int(row[j]), int(row[j + 1]))
            else:
                core.encode(int(row[escape_bucket]), int(row[escape_bucket + 1]))
                core.encode_exp_golomb(_escape_value(sym, k_min, k_max))
        self._count += len(symbols)

    def finish(self) -> bytes:
        header = self._count.to_bytes(4, "little")
        payload = self._core.finish() if self._count else b""
        trailer = _count_checksum(self._count).to_bytes(4, "little")
        return header + payload + trailer


class StreamDecoder:
    """Mirrors StreamEncoder; batches must be taken in the encoded order."""

    def __init__(self, data: bytes):
        if len(data) < 8:
            raise DecodeError("stream shorter than header+checksum", offset=0)
        self.data = data
        self.count = int.from_bytes(data[:4], "little")
        self._taken = 0
        self._core = _DecoderCore(data, 4) if self.count else None

    def take(self, batch: TableBatch, table_idx=None, n=None):
        if table_idx is None:
            n = batch.num_tables if n is None else n
            if n != batch.num_tables:
                raise CoderError("one table per symbol required")
            table_idx = np.arange(n)
        else:
            table_idx = np.asarray(table_idx, dtype=np.int64).ravel()
            n = len(table_idx)
        if self._taken + n > self.count:
            raise DecodeError("more symbols requested than encoded",
                              offset=self._core.pos if self._core else 4)
        entries = batch.entries
        k_min = batch.k_min
        escape_bucket = batch.support
        core = self._core
        out = np.empty(n, dtype=np.int64)
        for i, ti in enumerate(table_idx.tolist()):
            row = entries[ti]
            j = core.decode(row)
            if j == escape_bucket:
                out[i] = _unescape_value(core.decode_exp_golomb(), k_min, batch.k_max)
            else:
                out[i] = k_min + j
        self._taken += n
        return out

    def finish(self) -> int:
        """Verify count, checksum, and exact payload consumption; return bytes read."""
        if self._taken != self.count:
            raise DecodeError(
                f"decoded {self._taken} of {self.count} symbols",
                offset=self._core.pos if self._core else 4,
            )
        pos = self._core.pos if self._core else 4
        if pos + 4 > len(self.data):
            raise DecodeError("stream truncated before checksum", offset=pos)
        stored = int.from_bytes(self.data[pos:pos + 4], "little")
        if stored != _count_checksum(self.count):
            raise DecodeError("checksum mismatch", offset=pos)
        return pos + 4


def encode_symbols(symbols, batch: TableBatch, table_idx=None) -> bytes:
    enc = StreamEncoder()
    enc.put(symbols, batch, table_idx)
    return enc.finish()


def decode_symbols(data: bytes, batch: TableBatch, table_idx=None):
    dec = StreamDecoder(data)
    n = batch.num_tables if table_idx is None else len(np.asarray(table_idx).ravel())
    if dec.count != n:
        raise DecodeError(f"stream holds {dec.count} symbols, expected {n}", offset=0)
    out = dec.take(batch, table_idx)
    consumed = dec.finish()
    if consumed != len(data):
        raise DecodeError("residual bytes after decode", offset=consumed)
    return out
