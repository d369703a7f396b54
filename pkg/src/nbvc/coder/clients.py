"""Swappable coder backends sharing one batch encode/decode interface."""

import ctypes
import struct
import subprocess
import sys

import numpy as np

from ..errors import CoderError
from .framing import (OP_DECODE, OP_ENCODE, build_decode_request,
                      build_encode_request, parse_response)
from .range_coder import decode_symbols, encode_symbols
from .tables import TableBatch


class LocalCoder:
    """In-process pure-Python backend; the default for the codec."""

    def encode(self, symbols, batch: TableBatch, table_idx) -> bytes:
        return encode_symbols(symbols, batch, table_idx)

    def decode(self, stream: bytes, batch: TableBatch, table_idx):
        return decode_symbols(stream, batch, table_idx)

    def close(self):
        pass


class SubprocessCoder:
    """Backend speaking the framing over pipes to a child process.

    Defaults to the bundled Python service so everything runs without any
    external coder build; pass a different command to use one.
    """

    def __init__(self, command=None):
        self.command = command or [sys.executable, "-m", "nbvc.coder.service"]
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )

    def _call(self, request: bytes) -> bytes:
        proc = self._proc
        if proc.poll() is not None:
            raise CoderError("coder subprocess exited")
        proc.stdin.write(struct.pack("<I", len(request)))
        proc.stdin.write(request)
        proc.stdin.flush()
        header = proc.stdout.read(4)
        if len(header) < 4:
            raise CoderError("coder subprocess closed the pipe")
        (length,) = struct.unpack("<I", header)
        body = proc.stdout.read(length)
        if len(body) < length:
            raise CoderError("truncated coder response")
        return body

    def encode(self, symbols, batch: TableBatch, table_idx) -> bytes:
        req = build_encode_request(symbols, batch, table_idx)
        return parse_response(self._call(req), OP_ENCODE)

    def decode(self, stream: bytes, batch: TableBatch, table_idx):
        req = build_decode_request(bytes(stream), batch, table_idx,
                                   len(np.asarray(table_idx).ravel()))
        return parse_response(self._call(req), OP_DECODE)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(struct.pack("<I", 1) + b"\x00")
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (BrokenPipeError, OSError):
                pass
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ForeignCoder:
    """Backend calling a shared library exposing the framing entry point:

        int32 nvb_coder_call(const u8* req, usize len, u8** resp, usize* len)
        void  nvb_coder_free(u8* resp, usize len)
    """

    def __init__(self, library_path):
        self._lib = ctypes.CDLL(str(library_path))
        self._lib.nvb_coder_call.restype = ctypes.c_int32
        self._lib.nvb_coder_call.argtypes = [
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
            ctypes.POINTER(ctypes.POINTER(ctypes.c_uint8)),
            ctypes.POINTER(ctypes.c_size_t),
        ]
        self._lib.nvb_coder_free.restype = None
        self._lib.nvb_coder_free.argtypes = [
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
        ]

    def _call(self, request: bytes) -> bytes:
        buf = (ctypes.c_uint8 * len(request)).from_buffer_copy(request)
        resp_ptr = ctypes.POINTER(ctypes.c_uint8)()
        resp_len = ctypes.c_size_t()
        rc = self._lib.nvb_coder_call(buf, len(request),
                                      ctypes.byref(resp_ptr), ctypes.byref(resp_len))
        if rc != 0:
            raise CoderError(f"foreign coder call failed with rc={rc}")
        try:
            return ctypes.string_at(resp_ptr, resp_len.value)
        finally:
            self._lib.nvb_coder_free(resp_ptr, resp_len.value)

    def encode(self, symbols, batch: TableBatch, table_idx) -> bytes:
        req = build_encode_request(symbols, batch, table_idx)
        return parse_response(self._call(req), OP_ENCODE)

    def decode(self, stream: bytes, batch: TableBatch, table_idx):
        req = build_decode_request(bytes(stream), batch, table_idx,
                                   len(np.asarray(table_idx).ravel()))
        return parse_response(self._call(req), OP_DECODE)

    def close(self):
        pass
