"""Turning p-values into competition-style (label, score) pairs.

Small p-values in ``[0, a)`` become target wins scored by ``|Phi^-1(p)|``.
Large p-values in ``(b1, b2]`` are mirrored into ``[0, a)`` and become
decoy wins with the same scoring. Everything else is dropped.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ConfigError, DataError, HypothesisTable, PValueTable
from .numerics import normal_quantile

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConversionRegions:
    a: float = 0.5
    b1: float = 0.5
    b2: float = 1.0

    # The mirror map must send [0, a) onto (b1, b2] without moving any p-value
    # down, which is what a <= b1 guarantees; a <= 1/2 <= b1 is not needed.
    def __post_init__(self):
        if not (0 < self.a <= self.b1 < self.b2 <= 1):
            raise ConfigError(f"need 0 < a <= b1 < b2 <= 1, got a={self.a}, b1={self.b1}, b2={self.b2}")


def null_win_prob(regions: ConversionRegions) -> float:
    """Upper bound on P(L = +1) for a true null with non-decreasing density."""
    return regions.a / (regions.a + regions.b2 - regions.b1)


def mirror(p, regions: ConversionRegions):
    """Map p-values in ``(b1, b2]`` onto ``[0, a)``."""
    return (regions.b2 - np.asarray(p, dtype=np.float64)) * regions.a / (regions.b2 - regions.b1)


def convert_pvalues(pt: PValueTable, regions: ConversionRegions = ConversionRegions()):
    """Convert p-values to labels and winning scores.

    Returns
    -------
    table : HypothesisTable
        Scores may be infinite where p = 0 or p = b2; pass the table through
        :func:`replace_infinite_scores` before filtering.
    kept : ndarray of int
        Row indices of ``pt`` that fell inside one of the two regions.
    """
    p = pt.pvalues
    target = (p >= 0) & (p < regions.a)
    decoy = (p > regions.b1) & (p <= regions.b2)
    kept = np.flatnonzero(target | decoy)
    arg = np.where(target, p, mirror(p, regions))[kept]
    scores = np.abs(normal_quantile(np.clip(arg, 0.0, 1.0)))
    labels = np.where(target[kept], 1, -1)
    LOGGER.debug("kept %d of %d p-values", kept.size, p.size)
    table = HypothesisTable(
        labels=labels,
        scores=np.atleast_1d(scores),
        side_info=pt.side_info[kept],
        ids=[pt.ids[i] for i in kept],
        check_finite=False,
    )
    return table, kept


def replace_infinite_scores(table: HypothesisTable) -> HypothesisTable:
    """Replace non-finite scores by the largest finite score in the table."""
    scores = table.scores
    finite = np.isfinite(scores)
    if finite.all():
        if table.check_finite:
            return table
        return HypothesisTable(table.labels, scores, table.side_info, table.ids)
    if not finite.any():
        raise DataError("all scores are non-finite; nothing to replace them with")
    fixed = np.where(finite, scores, scores[finite].max())
    LOGGER.info("replaced %d non-finite scores", int((~finite).sum()))
    return HypothesisTable(table.labels, fixed, table.side_info, table.ids)


def pvalues_to_table(pt: PValueTable, regions: ConversionRegions = ConversionRegions()):
    """:func:`convert_pvalues` followed by :func:`replace_infinite_scores`."""
    table, kept = convert_pvalues(pt, regions)
    if table.n == 0:
        return HypothesisTable(table.labels, table.scores, table.side_info, table.ids), kept
    return replace_infinite_scores(table), kept
