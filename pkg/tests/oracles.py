"""Brute-force reference implementations used as test oracles.

Written directly from the textbook definitions with exact rational
arithmetic where it matters, and deliberately sharing no code with the
package under test.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache


def _binom_cdf_numerator(d: int, n: int, p: Fraction) -> tuple[int, int]:
    # P(Bin(n, p) <= d) = num / q**n with p = a / q; each term
    # C(n, k) a^k b^(n-k) follows from the previous one by an exact division
    a, q = p.numerator, p.denominator
    b = q - a
    term = b**n
    num = term
    for k in range(min(d, n)):
        term = term * (n - k) * a // ((k + 1) * b) if b else 0
        num += term
    return num, q**n


def binom_cdf_exact(d: int, n: int, p: Fraction) -> Fraction:
    """P(Bin(n, p) <= d) as an exact fraction, using integer arithmetic."""
    if d < 0:
        return Fraction(0)
    if d >= n:
        return Fraction(1)
    num, den = _binom_cdf_numerator(d, n, Fraction(p))
    return Fraction(num, den)


def binom_cdf_le(d: int, n: int, p: Fraction, bound: Fraction) -> bool:
    """``P(Bin(n, p) <= d) <= bound`` decided exactly by cross-multiplying."""
    if d < 0:
        return 0 <= bound
    if d >= n:
        return 1 <= bound
    num, den = _binom_cdf_numerator(d, n, Fraction(p))
    bound = Fraction(bound)
    return num * bound.denominator <= bound.numerator * den


def beta_cdf_int(a: int, b: int, x: Fraction) -> Fraction:
    """Regularized incomplete beta I_x(a, b) for integer a, b >= 1, exactly:
    the probability that Bin(a + b - 1, x) is at least a."""
    return 1 - binom_cdf_exact(a - 1, a + b - 1, Fraction(x))


def seqstep_count(labels, alpha: Fraction, c: Fraction, plus: bool) -> tuple[int, int]:
    """(cutoff k0, number of target wins in the top k0) by exhaustive scan."""
    best = 0
    d = 0
    for k in range(1, len(labels) + 1):
        d += labels[k - 1] == -1
        t = k - d
        if Fraction(d + (1 if plus else 0), max(t, 1)) * c / (1 - c) <= alpha:
            best = k
    return best, sum(1 for l in labels[:best] if l == 1)


def fdp_sd_R(c: Fraction) -> Fraction:
    # probability that a counted true null is a decoy win
    return 1 - c


def fdp_sd_i0(alpha: Fraction, gamma: Fraction, R: Fraction) -> int:
    # smallest integer n with (1-R)^n <= gamma, i.e. ceil(log_{1-R} gamma)
    n = 0
    while (1 - R) ** n > gamma:
        n += 1
    return max(1, math.ceil(Fraction(n) / alpha))


@lru_cache(maxsize=None)
def fdp_sd_delta(i: int, alpha: Fraction, gamma: Fraction, R: Fraction, reading: str = "inner") -> int:
    """Largest d in 0..i with BinomCDF(d; n(i, d), R) <= gamma, or -1.

    ``reading="inner"`` uses n = floor((i - d) alpha) + 1 + d and
    ``reading="outer"`` uses n = floor((i - d) alpha + 1 + d).
    """
    best = -1
    for d in range(i + 1):
        if reading == "inner":
            n = math.floor((i - d) * alpha) + 1 + d
        else:
            n = math.floor((i - d) * alpha + 1 + d)
        if binom_cdf_le(d, n, R, gamma):
            best = d
    return best


def fdp_sd_walk(labels, alpha: Fraction, gamma: Fraction, c: Fraction, draw=None) -> tuple[int, int]:
    """FDP stepdown on labels already in rank order.

    ``draw`` is a zero-argument callable returning uniforms for the
    coinflip; ``None`` keeps every bound at delta_i. Returns (k_FDP,
    target wins in the top k_FDP).
    """
    m = len(labels)
    R = fdp_sd_R(c)
    i0 = fdp_sd_i0(alpha, gamma, R)
    if i0 > m:
        return 0, 0
    D = [0] * (m + 1)
    for j, l in enumerate(labels, start=1):
        D[j] = D[j - 1] + (l == -1)
    delta = {i: fdp_sd_delta(i, alpha, gamma, R) for i in range(i0, m + 1)}

    def w_of(i):
        di = delta[i]
        k0 = math.floor((i - di) * alpha) + 1
        k1 = math.floor((i - di + 1) * alpha) + 1
        p0 = binom_cdf_exact(di, k0 + di, R)
        p1 = binom_cdf_exact(di + 1, k1 + di + 1, R)
        return (p1 - gamma) / (p1 - p0) if p1 != p0 else Fraction(1)

    prev_delta, prev_bar, prev_w = -1, 0, None
    bar_first = None
    i = i0
    while i <= m:
        di = delta[i]
        if draw is None:
            bar = di
        elif prev_bar == di + 1:
            bar = prev_bar
        else:
            wi = w_of(i)
            if di > prev_delta:
                wp = wi
            else:
                wp = wi / prev_w if prev_w and prev_w > 0 else Fraction(1)
            wp = min(max(wp, Fraction(0)), Fraction(1))
            bar = di if draw() < wp else di + 1
        if bar_first is None:
            bar_first = bar
        if D[i] <= bar:
            prev_delta, prev_bar = di, bar
            prev_w = w_of(i) if draw is not None else None
            i += 1
        else:
            break
    k = i - 1 if D[i0] <= bar_first else 0
    return k, sum(1 for l in labels[:k] if l == 1)


def decimal_values(xs):
    """Floats as the shortest decimals that round to them (0.1 -> 1/10)."""
    return [Fraction(repr(float(x))) for x in xs]


def beta_cdf_quadrature(a: float, b: float, x: float) -> float:
    from scipy.integrate import quad
    from scipy.special import beta as beta_fn

    val, _ = quad(lambda t: t ** (a - 1) * (1 - t) ** (b - 1), 0, x, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / beta_fn(a, b)


def gr_sd_count(p_sorted, alpha: Fraction, gamma: Fraction) -> int:
    """Guo-Romano stepdown on sorted p-values.

    ``p <= BetaQuantile(a, b)(gamma)`` is checked in the equivalent form
    ``I_p(a, b) <= gamma`` with the exact integer-parameter Beta CDF.
    """
    m = len(p_sorted)
    for i in range(1, m + 1):
        a, b = math.floor(alpha * i) + 1, m - i + 1
        if beta_cdf_int(a, b, Fraction(p_sorted[i - 1])) > gamma:
            return i - 1
    return m


def bh_count(p, alpha: Fraction) -> int:
    ps = sorted(Fraction(x) for x in p)
    m = len(ps)
    best = 0
    for i in range(1, m + 1):
        if ps[i - 1] <= alpha * i / m:
            best = i
    return best


def knn_counts(nonzero, zero, k: int):
    """Zero-scoring neighbours among the k nearest (self excluded), by
    sorting all pairwise distances."""
    pts = [tuple(r) for r in nonzero] + [tuple(r) for r in zero]
    n = len(nonzero)
    out = []
    for i in range(n):
        dists = sorted(
            (sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])), j) for j in range(len(pts)) if j != i
        )
        out.append(sum(1 for _, j in dists[:k] if j >= n))
    return out
