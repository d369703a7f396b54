"""Laplace likelihoods shared by training (torch) and coding (numpy).

Integer symbols are modeled per element as Laplace(mu, sigma) integrated
over the unit bin around the symbol; sigma is clamped to [0.01, 64] so the
code length stays bounded for any finite input.
"""

import math

import numpy as np
import torch

from .coder.tables import SIGMA_MAX, SIGMA_MIN

LIKELIHOOD_FLOOR = 2.0 ** -24
LOG2_E = math.log2(math.e)


def clamp_sigma(raw_sigma: torch.Tensor) -> torch.Tensor:
    """Map an unconstrained tensor to a valid scale: clamp(exp(raw))."""
    return torch.exp(raw_sigma).clamp(SIGMA_MIN, SIGMA_MAX)


def _laplace_cdf_torch(x):
    return torch.where(x <= 0, 0.5 * torch.exp(x.clamp(max=0.0)),
                       1.0 - 0.5 * torch.exp(-x.clamp(min=0.0)))


def symbol_bits(symbols: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Elementwise -log2 P(symbol) under Laplace(mu, sigma); differentiable."""
    upper = (symbols + 0.5 - mu) / sigma
    lower = (symbols - 0.5 - mu) / sigma
    p = (_laplace_cdf_torch(upper) - _laplace_cdf_torch(lower)).clamp(min=LIKELIHOOD_FLOOR)
    return -torch.log2(p)


def symbol_bits_np(symbols, mu, sigma):
    """Float64 reference of symbol_bits for coder-side rate estimates."""
    symbols = np.asarray(symbols, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)

    def cdf(x):
        return np.where(x <= 0, 0.5 * np.exp(np.minimum(x, 0.0)),
                        1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))

    p = cdf((symbols + 0.5 - mu) / sigma) - cdf((symbols - 0.5 - mu) / sigma)
    return -np.log2(np.maximum(p, LIKELIHOOD_FLOOR))
