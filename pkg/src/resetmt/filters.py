"""Selection procedures with finite-sample error control.

Competition filters operate on labels ranked by decreasing score:

* :func:`seqstep` -- Selective SeqStep (FDR) with or without the "+1".
* :func:`fdp_sd` -- FDP stepdown with optional coinflip randomization of
  the decoy bounds.

P-value filters operate on raw p-values:

* :func:`gr_sd` -- Guo-Romano stepdown (FDP).
* :func:`bh` -- Benjamini-Hochberg step-up (FDR).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DiscoveryList, FilterParams, sort_by_score_desc
from .numerics import beta_quantile, binom_cdf

# relative slack for threshold comparisons so that exact ties such as
# (0 + 1) / 5 == 0.2 are not lost to rounding
_RTOL = 1e-12


@dataclass(frozen=True)
class RankedLabels:
    """Labels in rank order together with the permutation that produced it.

    ``order[j]`` is the original row of the hypothesis at rank ``j``.
    ``decoys[k-1]`` and ``targets[k-1]`` count decoy and target wins in the
    top ``k`` ranks.
    """

    labels: np.ndarray
    order: np.ndarray
    decoys: np.ndarray
    targets: np.ndarray

    @classmethod
    def from_sorted(cls, labels, order=None) -> "RankedLabels":
        labels = np.asarray(labels, dtype=np.int8)
        if order is None:
            order = np.arange(labels.shape[0])
        return cls(
            labels=labels,
            order=np.asarray(order, dtype=np.int64),
            decoys=np.cumsum(labels == -1),
            targets=np.cumsum(labels == 1),
        )

    @classmethod
    def rank(cls, labels, scores, tie_rng: np.random.Generator) -> "RankedLabels":
        order = sort_by_score_desc(scores, tie_rng)
        return cls.from_sorted(np.asarray(labels)[order], order)

    @property
    def m(self) -> int:
        return self.labels.shape[0]

    def discoveries(self, k: int, rescored=None) -> DiscoveryList:
        top = self.order[:k][self.labels[:k] == 1]
        return DiscoveryList(indices=top, cutoff=k, rescored=rescored)


# --------------------------------------------------------------------------
# Selective SeqStep


def seqstep_cutoff(ranked: RankedLabels, alpha: float, c: float, plus: bool) -> int:
    if ranked.m == 0:
        return 0
    est = (ranked.decoys + (1 if plus else 0)) / np.maximum(ranked.targets, 1) * (c / (1 - c))
    ok = np.flatnonzero(est <= alpha * (1 + _RTOL))
    return int(ok[-1] + 1) if ok.size else 0


def seqstep(ranked: RankedLabels, params: FilterParams, plus: bool = True) -> DiscoveryList:
    """Selective SeqStep(+).

    Finds the largest ``k`` with ``(D_k + plus) / max(T_k, 1) * c / (1 - c)
    <= alpha`` and reports the target wins among the top ``k`` ranks.
    """
    k = seqstep_cutoff(ranked, params.alpha, params.c, plus)
    return ranked.discoveries(k)


# --------------------------------------------------------------------------
# FDP stepdown


@dataclass(frozen=True)
class FdpSdBounds:
    """Decoy-count bounds for FDP-SD over indices ``1..m``.

    Arrays are indexed by ``i - 1``. ``delta`` is -1 where no bound exists.
    The coinflip quantities (``k0``, ``k1``, ``p0``, ``p1``, ``w``) are NaN
    below ``i0``.
    """

    R: float
    lam: float
    i0: int
    delta: np.ndarray
    k0: np.ndarray
    k1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    w: np.ndarray

    @property
    def m(self) -> int:
        return self.delta.shape[0]


def decoy_probability(c: float) -> float:
    """Probability that a counted true null is a decoy win.

    FDP-SD is run with ``lambda = c`` so that ``R = (1 - lambda) / (c + 1 -
    lambda) = 1 - c``.
    """
    lam = c
    return (1 - lam) / (c + 1 - lam)


def first_testable_index(alpha: float, gamma: float, R: float) -> int:
    steps = math.ceil(math.log(gamma) / math.log(1 - R) - 1e-12)
    return max(1, math.ceil(steps / alpha - 1e-9))


def trial_count(i, d, alpha):
    """Number of Bernoulli trials ``floor((i - d) * alpha) + 1 + d``."""
    i = np.asarray(i)
    d = np.asarray(d)
    return np.floor((i - d) * alpha + 1e-12).astype(np.int64) + 1 + d


_CDF_TIE_TOL = 1e-12


def delta_bounds(m: int, alpha: float, gamma: float, R: float) -> np.ndarray:
    """``delta_i`` for ``i = 1..m`` by vectorized bisection over ``d``.

    The CDF condition is monotone in ``d`` so the feasible set is a prefix
    of ``{0, ..., i}``; -1 marks an empty set.
    """
    i = np.arange(1, m + 1, dtype=np.int64)
    lo = np.full(m, -1, dtype=np.int64)  # largest known feasible (or -1)
    hi = i + 1  # smallest known infeasible
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = np.where(active, (lo + hi) // 2, 0)
        # exact ties (e.g. R = gamma = 1/2) must count as feasible
        ok = binom_cdf(mid, trial_count(i, mid, alpha), R) <= gamma * (1 + _CDF_TIE_TOL)
        lo = np.where(active & ok, mid, lo)
        hi = np.where(active & ~ok, mid, hi)
    return lo


def fdp_sd_bounds(m: int, params: FilterParams) -> FdpSdBounds:
    alpha, gamma, c = params.alpha, params.gamma, params.c
    R = decoy_probability(c)
    i0 = first_testable_index(alpha, gamma, R)
    delta = delta_bounds(m, alpha, gamma, R)

    i = np.arange(1, m + 1, dtype=np.int64)
    nan = np.full(m, np.nan)
    k0, k1, p0, p1, w = nan.copy(), nan.copy(), nan.copy(), nan.copy(), nan.copy()
    sel = i >= i0
    if sel.any():
        ii, dd = i[sel], delta[sel]
        a0 = np.floor((ii - dd) * alpha + 1e-12).astype(np.int64) + 1
        a1 = np.floor((ii - dd + 1) * alpha + 1e-12).astype(np.int64) + 1
        q0 = np.where(dd >= 0, binom_cdf(np.maximum(dd, 0), a0 + np.maximum(dd, 0), R), 0.0)
        q1 = binom_cdf(dd + 1, a1 + dd + 1, R)
        denom = q1 - q0
        ww = np.where(denom > 0, (q1 - gamma) / np.where(denom > 0, denom, 1.0), 1.0)
        k0[sel], k1[sel], p0[sel], p1[sel], w[sel] = a0, a1, q0, q1, ww
    return FdpSdBounds(R=R, lam=c, i0=i0, delta=delta, k0=k0, k1=k1, p0=p0, p1=p1, w=w)


def fdp_sd_cutoff(
    ranked: RankedLabels,
    bounds: FdpSdBounds,
    coin_rng: np.random.Generator | None,
    deterministic: bool = False,
) -> int:
    m = ranked.m
    i0 = bounds.i0
    if i0 > m:
        return 0
    if bounds.m < m:
        raise ValueError("bounds were computed for fewer hypotheses than ranked")
    if not deterministic and coin_rng is None:
        raise ValueError("coinflip FDP-SD needs a random stream")
    D = ranked.decoys
    delta, w = bounds.delta, bounds.w
    prev_delta, prev_bar, prev_w = -1, 0, np.nan
    bar_i0 = None
    i = i0
    while i <= m:
        dl = int(delta[i - 1])
        if deterministic:
            bar = dl
        elif prev_bar == dl + 1:
            bar = prev_bar
        else:
            if dl > prev_delta:
                wp = w[i - 1]
            else:
                wp = w[i - 1] / prev_w if prev_w > 0 else 1.0
            wp = min(max(wp, 0.0), 1.0)
            bar = dl if coin_rng.random() < wp else dl + 1
        if bar_i0 is None:
            bar_i0 = bar
        if D[i - 1] <= bar:
            prev_delta, prev_bar, prev_w = dl, bar, w[i - 1]
            i += 1
        else:
            break
    return i - 1 if D[i0 - 1] <= bar_i0 else 0


def fdp_sd(
    ranked: RankedLabels,
    params: FilterParams,
    coin_rng: np.random.Generator | None = None,
    deterministic: bool = False,
    bounds: FdpSdBounds | None = None,
) -> DiscoveryList:
    """FDP stepdown.

    Walks ``i = i0, i0+1, ...`` while ``D_i`` stays within the (possibly
    randomized) bound and reports the target wins in the top ``k_FDP``
    ranks. With ``deterministic=True`` the bound is never raised and
    ``coin_rng`` is not consulted.
    """
    if bounds is None or bounds.m < ranked.m:
        bounds = fdp_sd_bounds(ranked.m, params)
    k = fdp_sd_cutoff(ranked, bounds, coin_rng, deterministic)
    return ranked.discoveries(k)


# --------------------------------------------------------------------------
# p-value procedures


def _ascending(pvalues, rng):
    p = np.asarray(pvalues, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if rng is None:
        return np.argsort(p, kind="stable")
    return np.lexsort((rng.random(p.shape[0]), p))


def gr_sd_thresholds(m: int, alpha: float, gamma: float) -> np.ndarray:
    i = np.arange(1, m + 1)
    k = np.floor(alpha * i + 1e-12) + 1
    return beta_quantile(k, m - i + 1, np.full(m, gamma))


def gr_sd(pvalues, alpha: float, gamma: float, rng=None) -> DiscoveryList:
    """Guo-Romano stepdown: the largest prefix of sorted p-values with
    ``p_(j) <= delta_j`` for every ``j`` in the prefix."""
    order = _ascending(pvalues, rng)
    m = order.shape[0]
    if m == 0:
        return DiscoveryList(indices=[], cutoff=0)
    p = np.asarray(pvalues, dtype=np.float64)[order]
    # a p-value equal to its threshold up to rounding passes, as in bh
    fail = np.flatnonzero(p > gr_sd_thresholds(m, alpha, gamma) * (1 + _RTOL))
    k = int(fail[0]) if fail.size else m
    return DiscoveryList(indices=order[:k], cutoff=k)


def bh(pvalues, alpha: float) -> DiscoveryList:
    order = _ascending(pvalues, None)
    m = order.shape[0]
    if m == 0:
        return DiscoveryList(indices=[], cutoff=0)
    p = np.asarray(pvalues, dtype=np.float64)[order]
    ok = np.flatnonzero(p <= alpha * np.arange(1, m + 1) / m * (1 + _RTOL))
    k = int(ok[-1] + 1) if ok.size else 0
    return DiscoveryList(indices=order[:k], cutoff=k)


# --------------------------------------------------------------------------
# convenience entry point


COMPETITION_METHODS = ("seqstep", "seqstep+", "fdpsd")


def competition_filter(
    labels,
    scores,
    params: FilterParams,
    method: str,
    tie_rng: np.random.Generator,
    coin_rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> DiscoveryList:
    """Rank ``(labels, scores)`` and apply one of the competition filters."""
    ranked = RankedLabels.rank(labels, scores, tie_rng)
    if method == "seqstep":
        return seqstep(ranked, params, plus=False)
    if method == "seqstep+":
        return seqstep(ranked, params, plus=True)
    if method == "fdpsd":
        return fdp_sd(ranked, params, coin_rng, deterministic=deterministic)
    raise ValueError(f"unknown competition method {method!r}")
