"""Binomial, beta and normal distribution functions used by the filters.

Thin wrappers over :mod:`scipy.special` with argument checking. The
binomial CDF goes through the regularized incomplete beta function so a
single evaluation costs O(1) regardless of the number of trials.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class NumericTolerances:
    quantile_abs_tol: float = 1e-12
    cdf_rel_tol: float = 1e-14

    def __post_init__(self):
        if self.quantile_abs_tol <= 0 or self.cdf_rel_tol <= 0:
            raise ValueError("tolerances must be positive")


DEFAULT_TOLERANCES = NumericTolerances()


def binom_cdf(d, n, p):
    """P(X <= d) for X ~ Binomial(n, p).

    Evaluated as ``I_{1-p}(n - d, d + 1)``; returns exactly 1.0 where
    ``d >= n``. Accepts scalars or broadcastable arrays.

    >>> binom_cdf(1, 4, 0.5)
    0.3125
    """
    d = np.asarray(d)
    n = np.asarray(n)
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p must lie in [0, 1]")
    if np.any(d < 0) or np.any(n < 0):
        raise ValueError("d and n must be non-negative")
    full = d >= n
    a = np.where(full, 1, n - d).astype(np.float64)
    out = np.where(full, 1.0, special.betainc(a, d + 1.0, 1.0 - p))
    return float(out) if out.ndim == 0 else out


def beta_cdf(x, a, b):
    return special.betainc(a, b, x)


def beta_quantile(a, b, q, tol: NumericTolerances = DEFAULT_TOLERANCES):
    """Inverse CDF of Beta(a, b) at probability ``q``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta shape parameters must be positive")
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("q must lie strictly inside (0, 1)")
    x = special.betaincinv(a, b, q)
    # one Newton step tightens the last few ulps where betaincinv is loose
    dens = np.exp(special.xlogy(a - 1, x) + special.xlog1py(b - 1, -x) - special.betaln(a, b))
    step = np.where(dens > 0, (special.betainc(a, b, x) - q) / np.where(dens > 0, dens, 1.0), 0.0)
    polished = np.clip(x - step, 0.0, 1.0)
    better = np.abs(special.betainc(a, b, polished) - q) < np.abs(special.betainc(a, b, x) - q)
    x = np.where(better, polished, x)
    return float(x) if x.ndim == 0 else x


def normal_cdf(z):
    return special.ndtr(z)


def normal_quantile(q):
    """Standard normal quantile; q in {0, 1} maps to -inf / +inf."""
    q = np.asarray(q, dtype=np.float64)
    if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
        raise ValueError("q must lie in [0, 1]")
    z = special.ndtri(q)
    return float(z) if z.ndim == 0 else z
