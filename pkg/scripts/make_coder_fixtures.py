#!/usr/bin/env python3
"""Generate golden request/response byte fixtures for the coder boundary.

Each fixture is a framed request plus the byte-exact response the reference
(Python) coder produces for it; any conforming coder implementation must
reproduce the response bit for bit.
"""

from pathlib import Path

import numpy as np

from nbvc.coder import build_laplace_cdf_batch, build_uniform_cdf, encode_symbols
from nbvc.coder.framing import (build_decode_request, build_encode_request,
                                handle_request)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "coder"


def emit(name, request):
    response = handle_request(request)
    (FIXTURE_DIR / f"{name}_request.bin").write_bytes(request)
    (FIXTURE_DIR / f"{name}_response.bin").write_bytes(response)
    print(f"{name}: request {len(request)}B response {len(response)}B")


def main():
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240809)

    batch1 = build_laplace_cdf_batch([0.0], [1.0])
    emit("00_empty_encode", build_encode_request(
        np.zeros(0, dtype=np.int64), batch1, np.zeros(0, dtype=np.int64)))

    syms = np.array([0, 1, -1, 5, -7, 63, -64, 2], dtype=np.int64)
    batch2 = build_laplace_cdf_batch(np.linspace(-2, 2, 8), np.linspace(0.5, 4, 8))
    emit("01_small_encode", build_encode_request(syms, batch2, np.arange(8)))

    n = 1024
    mu = rng.normal(0, 3, n)
    sigma = np.exp(rng.uniform(np.log(0.02), np.log(32), n))
    batch3 = build_laplace_cdf_batch(mu, sigma)
    syms3 = np.round(rng.normal(mu, sigma)).astype(np.int64)
    syms3[::97] = 5000       # far escapes, both signs
    syms3[1::131] = -123456
    emit("02_bulk_encode", build_encode_request(syms3, batch3, np.arange(n)))

    stream3 = encode_symbols(syms3, batch3)
    emit("03_bulk_decode", build_decode_request(stream3, batch3, np.arange(n), n))

    uni = build_uniform_cdf(256)
    syms4 = rng.integers(0, 256, 512)
    emit("04_uniform_encode", build_encode_request(
        syms4, uni, np.zeros(512, dtype=np.int64)))

    corrupted = bytearray(stream3)
    corrupted[-1] ^= 0xFF
    emit("05_checksum_error_decode", build_decode_request(
        bytes(corrupted), batch3, np.arange(n), n))


if __name__ == "__main__":
    main()
