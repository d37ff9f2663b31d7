"""RESET: rescoring via estimating and training.

Decoy wins are split at random into training decoys, which the ensemble
learns from and which are then discarded, and estimating decoys, which
stay with the target wins as pseudo targets. After rescoring, the original
labels of the pseudo targets are revealed and SeqStep+ (FDR) or FDP-SD
(FDP) is applied with the adjusted null target probability
``c = c0 / (1 - s (1 - c0))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .ensemble import EnsembleConfig, EnsembleResult, RescoringInput, run_ensemble
from .filters import FilterParams, RankedLabels, delta_bounds, decoy_probability, fdp_sd, seqstep
from .model import ConfigError, DiscoveryList, HypothesisTable, Mode, PValueTable, SeedSpec
from .pvalue_adapter import ConversionRegions, null_win_prob, pvalues_to_table

LOGGER = logging.getLogger(__name__)


def adjust_c(c0: float, s: float) -> float:
    """Null target-win probability among pseudo targets."""
    return c0 / (1 - s * (1 - c0))


@dataclass(frozen=True)
class ResetConfig:
    alpha: float = 0.1
    mode: Mode = Mode.FDR
    gamma: float | None = None
    s: float = 0.5
    c0: float = 0.5
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    seed: SeedSpec = field(default_factory=SeedSpec)
    deterministic_fdpsd: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.s < 1:
            raise ConfigError("s must lie in [0, 1)")
        if not 0 < self.c0 < 1:
            raise ConfigError("c0 must lie in (0, 1)")
        if self.mode is Mode.FDP and self.gamma is None:
            raise ConfigError("FDP mode needs gamma")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not isinstance(self.seed, SeedSpec):
            object.__setattr__(self, "seed", SeedSpec(self.seed))

    @property
    def c(self) -> float:
        return adjust_c(self.c0, self.s)

    def filter_params(self) -> FilterParams:
        return FilterParams(alpha=self.alpha, c=self.c, gamma=self.gamma or 0.1, mode=self.mode)


@dataclass(frozen=True)
class PseudoLabeling:
    pseudo_labels: np.ndarray
    training_decoys: np.ndarray
    pseudo_targets: np.ndarray


def split_decoys(labels, s: float, rng: np.random.Generator) -> PseudoLabeling:
    """Send each decoy win to the training set independently with probability ``s``.

    One uniform draw is consumed per hypothesis (targets included) so the
    assignment of a given decoy does not depend on the other labels.
    """
    labels = np.asarray(labels)
    u = rng.random(labels.shape[0])
    training = (labels == -1) & (u < s)
    pseudo = np.where(training, -1, 1).astype(np.int8)
    return PseudoLabeling(pseudo, np.flatnonzero(training), np.flatnonzero(~training))


@dataclass(frozen=True)
class ResetResult:
    """Discoveries (row indices of the input table) and diagnostics.

    ``rescored`` has one entry per input row; training decoys and dropped
    zero-score rows hold NaN.
    """

    discoveries: DiscoveryList
    rescored: np.ndarray
    pseudo: PseudoLabeling
    kept: np.ndarray  # input rows that entered RESET (nonzero scores)
    c: float
    ensemble: EnsembleResult

    @property
    def pseudo_target_rows(self) -> np.ndarray:
        return self.kept[self.pseudo.pseudo_targets]


def run_reset(table: HypothesisTable, config: ResetConfig) -> ResetResult:
    seeds = config.seed
    nonzero = np.flatnonzero(table.scores != 0)
    zero_x = table.side_info[table.scores == 0] if nonzero.size < table.n else None
    labels = table.labels[nonzero]
    scores = table.scores[nonzero]
    x = table.side_info[nonzero]

    pseudo = split_decoys(labels, config.s, seeds.stream("decoy_split"))
    inp = RescoringInput(pseudo.pseudo_labels, scores, x, config.c0, config.s, zero_x)
    ens = run_ensemble(inp, config.ensemble, config.alpha, seeds.child(0))

    # training decoys are dropped; only now are the pseudo targets' labels used
    J = pseudo.pseudo_targets
    params = config.filter_params()
    ranked = RankedLabels.rank(labels[J], ens.rescored[J], seeds.stream("tie_break"))
    if config.mode is Mode.FDR:
        found = seqstep(ranked, params, plus=True)
    else:
        found = fdp_sd(ranked, params, seeds.stream("coinflip"), deterministic=config.deterministic_fdpsd)

    rows = nonzero[J[found.indices]]
    rescored = np.full(table.n, np.nan)
    rescored[nonzero[J]] = ens.rescored[J]
    LOGGER.info("RESET: %d discoveries among %d pseudo targets (c=%.4f)", rows.size, J.size, config.c)
    return ResetResult(
        discoveries=DiscoveryList(rows, found.cutoff, rescored),
        rescored=rescored,
        pseudo=pseudo,
        kept=nonzero,
        c=config.c,
        ensemble=ens,
    )


def run_reset_pvalues(pt: PValueTable, config: ResetConfig, regions: ConversionRegions = ConversionRegions()):
    """RESET on p-values; ``config.c0`` is replaced by the region bound.

    Discovery indices refer to rows of ``pt``.
    """
    table, kept = pvalues_to_table(pt, regions)
    config = replace(config, c0=null_win_prob(regions))
    result = run_reset(table, config)
    rows = kept[result.discoveries.indices]
    rescored = np.full(pt.n, np.nan)
    rescored[kept] = result.rescored
    return ResetResult(
        discoveries=DiscoveryList(rows, result.discoveries.cutoff, rescored),
        rescored=rescored,
        pseudo=result.pseudo,
        kept=kept[result.kept],
        c=result.c,
        ensemble=result.ensemble,
    )


def compare_bounds(
    alpha: float = 0.01,
    gamma: float = 0.1,
    c_fdpsd: float = 0.5,
    c_reset: float = 2 / 3,
    indices=None,
) -> dict:
    """FDP-SD decoy bounds next to doubled RESET bounds.

    RESET discards about half the decoys for training, so its bounds are
    doubled before comparing. Returns arrays keyed ``index``, ``fdpsd``,
    ``reset_doubled`` and ``ratio`` (NaN where the FDP-SD bound is not
    positive).
    """
    if indices is None:
        indices = np.arange(1000, 20001, 1000)
    indices = np.asarray(indices, dtype=np.int64)
    m = int(indices.max())
    plain = delta_bounds(m, alpha, gamma, decoy_probability(c_fdpsd))[indices - 1]
    reset = delta_bounds(m, alpha, gamma, decoy_probability(c_reset))[indices - 1]
    doubled = 2 * reset
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(plain > 0, doubled / np.where(plain > 0, plain, 1), np.nan)
    return {"index": indices, "fdpsd": plain, "reset_doubled": doubled, "ratio": ratio}
