"""Quantized CDF tables for the range coder.

Tables are fixed-point with 16 fractional bits: entries[0] == 0,
entries[-1] == 65536, strictly increasing, one bucket per symbol in the
support window [k_min, k_max] plus a trailing escape bucket that holds the
tail mass. Every bucket is at least one quantum so any symbol stays codable.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import CoderError

CDF_BITS = 16
CDF_TOTAL = 1 << CDF_BITS
DEFAULT_K_MIN = -64
DEFAULT_K_MAX = 63
SIGMA_MIN = 0.01
SIGMA_MAX = 64.0


@dataclass(frozen=True)
class TableBatch:
    """A stack of CDF tables sharing one support window.

    entries: int64 array (n_tables, support + 2) where
    support = k_max - k_min + 1; column layout is
    [0, ..cumulative symbol buckets.., escape end == 65536].
    """

    k_min: int
    k_max: int
    entries: np.ndarray

    def __post_init__(self):
        support = self.k_max - self.k_min + 1
        if self.entries.ndim != 2 or self.entries.shape[1] != support + 2:
            raise CoderError(
                f"table entries must be (n, {support + 2}), got {self.entries.shape}"
            )

    @property
    def num_tables(self):
        return self.entries.shape[0]

    @property
    def support(self):
        return self.k_max - self.k_min + 1

    def validate(self):
        e = self.entries
        if not (e[:, 0] == 0).all() or not (e[:, -1] == CDF_TOTAL).all():
            raise CoderError("CDF tables must start at 0 and end at 65536")
        if not (np.diff(e, axis=1) >= 1).all():
            raise CoderError("CDF tables must be strictly increasing")
        return self


def _laplace_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.0, 0.5 * np.exp(np.minimum(x, 0.0)),
                    1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))


def build_laplace_cdf_batch(mu, sigma, k_min=DEFAULT_K_MIN, k_max=DEFAULT_K_MAX) -> TableBatch:
    """Quantize Laplace(mu, sigma) bucket masses to 16-bit CDF tables.

    Bucket masses are floored to quanta, zero buckets are bumped to one
    quantum, and the remaining deficit/excess is applied to the largest
    bucket (smallest index on ties).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if mu.shape != sigma.shape or mu.ndim != 1:
        raise CoderError("mu and sigma must be 1-D arrays of equal length")
    # float32 producers may sit one ulp outside the window; snap those back.
    if (sigma < SIGMA_MIN * (1 - 1e-3)).any() or (sigma > SIGMA_MAX * (1 + 1e-3)).any():
        raise CoderError(f"sigma outside [{SIGMA_MIN}, {SIGMA_MAX}]")
    sigma = np.clip(sigma, SIGMA_MIN, SIGMA_MAX)
    if k_min >= k_max:
        raise CoderError("k_min must be < k_max")

    support = k_max - k_min + 1
    edges = k_min - 0.5 + np.arange(support + 1, dtype=np.float64)
    z = (edges[None, :] - mu[:, None]) / sigma[:, None]
    cdf = _laplace_cdf(z)
    masses = np.diff(cdf, axis=1)
    escape = 1.0 - (cdf[:, -1] - cdf[:, 0])
    masses = np.concatenate([masses, np.maximum(escape, 0.0)[:, None]], axis=1)

    quanta = np.floor(masses * CDF_TOTAL).astype(np.int64)
    quanta = np.maximum(quanta, 1)
    deficit = CDF_TOTAL - quanta.sum(axis=1)
    largest = np.argmax(quanta, axis=1)
    quanta[np.arange(quanta.shape[0]), largest] += deficit
    if (quanta < 1).any():
        raise CoderError("CDF quantization produced an empty bucket")

    entries = np.zeros((quanta.shape[0], support + 2), dtype=np.int64)
    np.cumsum(quanta, axis=1, out=entries[:, 1:])
    return TableBatch(k_min=k_min, k_max=k_max, entries=entries).validate()


def build_laplace_cdf(mu, sigma, k_min=DEFAULT_K_MIN, k_max=DEFAULT_K_MAX) -> TableBatch:
    return build_laplace_cdf_batch([mu], [sigma], k_min, k_max)


def build_uniform_cdf(num_symbols: int) -> TableBatch:
    """Near-uniform table over symbols 0..num_symbols-1 (plus escape)."""
    if num_symbols < 2:
        raise CoderError("uniform table needs >= 2 symbols")
    per = CDF_TOTAL // (num_symbols + 1)
    quanta = np.full(num_symbols + 1, per, dtype=np.int64)
    quanta[-1] = CDF_TOTAL - per * num_symbols
    entries = np.zeros((1, num_symbols + 2), dtype=np.int64)
    np.cumsum(quanta, out=entries[0, 1:])
    return TableBatch(k_min=0, k_max=num_symbols - 1, entries=entries).validate()
