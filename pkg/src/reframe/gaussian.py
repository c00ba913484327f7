"""Standard normal density, CDF and quantile helpers.

Thin wrappers so the rest of the package has one vectorised, numerically
careful source for phi / Phi / Phi^{-1}.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

SQRT_2PI = math.sqrt(2.0 * math.pi)


def pdf(z):
    """Standard normal density; accepts scalars or arrays."""
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def cdf(z):
    """Standard normal CDF; accepts scalars or arrays."""
    out = ndtr(np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def ppf(p):
    """Standard normal quantile (inverse CDF)."""
    out = ndtri(np.asarray(p, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def density(y, mu, sigma):
    """Density of N(mu, sigma^2) evaluated at y."""
    z = (np.asarray(y, dtype=float) - mu) / sigma
    out = np.exp(-0.5 * z * z) / (sigma * SQRT_2PI)
    return float(out) if out.ndim == 0 else out
