"""Core data containers shared across the package.

Everything here is immutable after construction: arrays are copied and
flagged read-only so tables can be handed to worker threads without
defensive copies.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a table invariant."""


class ConfigError(ValueError):
    """Raised for invalid parameter combinations."""


class Mode(str, enum.Enum):
    FDR = "fdr"
    FDP = "fdp"


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _default_ids(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


def _side_info_matrix(side_info, n: int) -> np.ndarray:
    if side_info is None:
        return _frozen(np.empty((n, 0)), np.float64)
    x = np.asarray(side_info, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] != n:
        raise DataError(f"side_info must have {n} rows, got shape {x.shape}")
    return _frozen(x, np.float64)


@dataclass(frozen=True)
class HypothesisTable:
    """Labels, winning scores and side information for ``n`` hypotheses.

    Parameters
    ----------
    labels : array_like of {+1, -1}
        Target (+1) or decoy (-1) win for each hypothesis.
    scores : array_like of float
        Winning scores. Must be finite; use
        :func:`resetmt.pvalue_adapter.replace_infinite_scores` first when
        converting p-values equal to zero.
    side_info : array_like, shape (n, d), optional
    ids : sequence of str, optional
        Opaque identifiers, passed through untouched.
    """

    labels: np.ndarray
    scores: np.ndarray
    side_info: np.ndarray = None
    ids: tuple = None
    check_finite: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        scores = np.asarray(self.scores, dtype=np.float64)
        if labels.ndim != 1 or scores.ndim != 1 or labels.shape != scores.shape:
            raise DataError("labels and scores must be 1-d arrays of equal length")
        if labels.size and not np.all(np.isin(labels, (-1, 1))):
            raise DataError("labels must be +1 or -1")
        if self.check_finite and not np.all(np.isfinite(scores)):
            raise DataError("scores must be finite")
        n = labels.shape[0]
        ids = _default_ids(n) if self.ids is None else tuple(str(i) for i in self.ids)
        if len(ids) != n:
            raise DataError(f"expected {n} ids, got {len(ids)}")
        object.__setattr__(self, "labels", _frozen(labels, np.int8))
        object.__setattr__(self, "scores", _frozen(scores, np.float64))
        object.__setattr__(self, "side_info", _side_info_matrix(self.side_info, n))
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.side_info.shape[1]

    def subset(self, index) -> "HypothesisTable":
        index = np.asarray(index)
        return HypothesisTable(
            labels=self.labels[index],
            scores=self.scores[index],
            side_info=self.side_info[index],
            ids=[self.ids[i] for i in np.arange(self.n)[index]],
            check_finite=self.check_finite,
        )


@dataclass(frozen=True)
class PValueTable:
    pvalues: np.ndarray
    side_info: np.ndarray = None
    ids: tuple = None

    def __post_init__(self):
        p = np.asarray(self.pvalues, dtype=np.float64)
        if p.ndim != 1:
            raise DataError("pvalues must be a 1-d array")
        if not np.all((p >= 0) & (p <= 1)):
            raise DataError("p-values must lie in [0, 1]")
        n = p.shape[0]
        ids = _default_ids(n) if self.ids is None else tuple(str(i) for i in self.ids)
        if len(ids) != n:
            raise DataError(f"expected {n} ids, got {len(ids)}")
        object.__setattr__(self, "pvalues", _frozen(p, np.float64))
        object.__setattr__(self, "side_info", _side_info_matrix(self.side_info, n))
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.pvalues.shape[0]


@dataclass(frozen=True)
class FilterParams:
    """Threshold ``alpha``, confidence complement ``gamma`` and the null
    target-win probability ``c`` used by the competition filters."""

    alpha: float
    c: float = 0.5
    gamma: float = 0.1
    mode: Mode = Mode.FDR

    def __post_init__(self):
        for name in ("alpha", "gamma", "c"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        object.__setattr__(self, "mode", Mode(self.mode))


STREAMS = (
    "decoy_split",
    "fold_assignment",
    "tie_break",
    "coinflip",
    "classifier_init",
    "simulation",
)
_CHILD_TAG = 1000


@dataclass(frozen=True)
class SeedSpec:
    """Master seed with independent named random streams.

    Each stream is seeded from ``SeedSequence(master_seed, spawn_key=...)``
    with a distinct spawn key, so draws on one stream never shift another.
    ``child(j)`` derives a fresh ``SeedSpec`` for the j-th replicate of a
    Monte Carlo loop.
    """

    master_seed: int = 0
    path: tuple = ()

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", seed)
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def stream(self, name: str) -> np.random.Generator:
        try:
            idx = STREAMS.index(name)
        except ValueError:
            raise KeyError(f"unknown random stream {name!r}") from None
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.path + (idx,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, j: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.path + (_CHILD_TAG, int(j)))


@dataclass(frozen=True)
class DiscoveryList:
    """Result of a selection procedure.

    ``indices`` refer to rows of the table the filter was applied to (for
    RESET, rows of the original input table). ``cutoff`` is the number of
    top-ranked hypotheses inspected (k0, k_FDP or k_GR). ``rescored`` holds
    the learned scores when the list comes out of RESET.
    """

    indices: np.ndarray
    cutoff: int
    rescored: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen(np.sort(np.asarray(self.indices, dtype=np.int64)), np.int64))
        object.__setattr__(self, "cutoff", int(self.cutoff))
        if self.rescored is not None:
            object.__setattr__(self, "rescored", _frozen(self.rescored, np.float64))

    def __len__(self) -> int:
        return self.indices.shape[0]


def sort_by_score_desc(scores: Sequence[float], tie_rng: np.random.Generator) -> np.ndarray:
    """Permutation ordering ``scores`` from highest to lowest.

    Ties are placed in uniformly random order using ``tie_rng``; exactly one
    uniform draw per element is consumed regardless of whether ties exist.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return np.empty(0, dtype=np.int64)
    keys = tie_rng.random(scores.shape[0])
    return np.lexsort((keys, -scores)).astype(np.int64)
