"""Semi-supervised rescoring with an ensemble of classifiers.

The engine only ever sees a :class:`RescoringInput`: pseudo labels,
winning scores and side information. Original target/decoy labels of the
pseudo targets are not part of that object, which is what keeps their
null labels exchangeable after rescoring.

Outline of :func:`run_ensemble`:

1. Optional k-nearest-neighbour feature counting zero-scoring neighbours.
2. Side-information screening by a per-column smooth fit of ``W * L~``.
3. Initial positive set: best single ordering feature, pseudo targets
   discovered by Selective SeqStep at ``alpha0`` (escalated as needed).
4. K-fold x r-repetition evaluation of every model in the grid; the model
   with the most pseudo discoveries wins and its averaged out-of-fold
   scores become the new scores.
5. Positive set redefined from the new scores, evaluation repeated once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial import cKDTree

from .classifiers import ClassifierSpec, TrainingError, default_grid, score, train
from .classifiers.spline import smooth_association_pvalue
from .filters import RankedLabels
from .model import ConfigError, SeedSpec

LOGGER = logging.getLogger(__name__)

ESCALATION_STEP = 0.01
_RTOL = 1e-12


@dataclass(frozen=True)
class EnsembleConfig:
    K: int = 3
    r: int = 10
    alpha: float | None = None  # model-selection level; None -> the filter's alpha
    alpha0: float = 0.5
    min_positive: int = 50
    knn: int = 20
    sideinfo_p_cutoff: float = 0.01
    grid: tuple = field(default_factory=default_grid)
    adjust_c: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.r < 1:
            raise ConfigError("r must be >= 1")
        if self.min_positive < 1:
            raise ConfigError("min_positive must be >= 1")
        if not 0 < self.alpha0 <= 1:
            raise ConfigError("alpha0 must lie in (0, 1]")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if len(self.grid) == 0:
            raise ConfigError("model grid is empty")
        object.__setattr__(self, "grid", tuple(self.grid))


@dataclass(frozen=True)
class RescoringInput:
    """Everything the rescoring engine is allowed to look at."""

    pseudo_labels: np.ndarray
    scores: np.ndarray
    side_info: np.ndarray
    c0: float
    s: float
    zero_side_info: np.ndarray | None = None

    def __post_init__(self):
        pl = np.asarray(self.pseudo_labels, dtype=np.int8)
        w = np.asarray(self.scores, dtype=np.float64)
        x = np.asarray(self.side_info, dtype=np.float64).reshape(w.shape[0], -1)
        if pl.shape != w.shape:
            raise ValueError("pseudo_labels and scores differ in length")
        for name, v in (("pseudo_labels", pl), ("scores", w), ("side_info", x)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.zero_side_info is not None:
            z = np.asarray(self.zero_side_info, dtype=np.float64).reshape(-1, x.shape[1])
            z.setflags(write=False)
            object.__setattr__(self, "zero_side_info", z)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def pseudo_targets(self) -> np.ndarray:
        return np.flatnonzero(self.pseudo_labels == 1)

    @property
    def training_decoys(self) -> np.ndarray:
        return np.flatnonzero(self.pseudo_labels == -1)


def ensemble_c(c0: float, s: float, adjust: bool = True) -> float:
    """Null pseudo-target probability used when scoring pseudo labels."""
    return 1 - s * (1 - c0) if adjust else c0


# --------------------------------------------------------------------------
# Selective SeqStep on pseudo labels


class PseudoRanking:
    """Pseudo labels ranked once by a score so that several levels can be
    applied without re-drawing tie breaks."""

    def __init__(self, pseudo_labels, values, c: float, tie_rng: np.random.Generator):
        self.ranked = RankedLabels.rank(pseudo_labels, values, tie_rng)
        self.ratio = self.ranked.decoys / np.maximum(self.ranked.targets, 1) * (c / (1 - c))

    def cutoff(self, alpha: float) -> int:
        ok = np.flatnonzero(self.ratio <= alpha * (1 + _RTOL))
        return int(ok[-1] + 1) if ok.size else 0

    def discovered(self, alpha: float) -> np.ndarray:
        """Original indices of the pseudo targets in the top ``cutoff`` ranks."""
        return self.ranked.discoveries(self.cutoff(alpha)).indices

    def escalate(self, alpha: float, min_positive: int) -> tuple[np.ndarray, float]:
        """Raise ``alpha`` by 0.01 until enough pseudo targets are discovered.

        Stops once ``min(min_positive, #pseudo targets)`` is reached; past
        ``alpha = 1`` every pseudo target is returned.
        """
        n_targets = int(self.ranked.targets[-1]) if self.ranked.m else 0
        need = min(min_positive, n_targets)
        steps = 0
        level = alpha
        while True:
            found = self.discovered(level)
            if found.size >= need:
                return found, level
            steps += 1
            level = round(alpha + steps * ESCALATION_STEP, 10)
            if level > 1:
                keep = self.ranked.labels == 1
                return np.sort(self.ranked.order[keep]), level


def sss_count(pseudo_labels, values, alpha, c, tie_rng) -> int:
    ranking = PseudoRanking(pseudo_labels, values, c, tie_rng)
    k = ranking.cutoff(alpha)
    return int(ranking.ranked.targets[k - 1]) if k else 0


# --------------------------------------------------------------------------
# heuristics


def knn_zero_feature(nonzero_side_info, zero_side_info, knn: int = 20) -> np.ndarray:
    """Count zero-scoring hypotheses among each nonzero hypothesis'
    ``knn`` nearest neighbours (Euclidean, the hypothesis itself excluded).
    """
    A = np.asarray(nonzero_side_info, dtype=np.float64)
    n = A.shape[0]
    if zero_side_info is None or len(zero_side_info) == 0 or n == 0:
        return np.zeros(n)
    Z = np.asarray(zero_side_info, dtype=np.float64).reshape(-1, A.shape[1])
    pts = np.vstack([A, Z])
    k = min(knn, pts.shape[0] - 1)
    if k <= 0:
        return np.zeros(n)
    _, idx = cKDTree(pts).query(A, k=k + 1)
    idx = np.asarray(idx).reshape(n, k + 1)
    counts = np.empty(n)
    for i in range(n):
        row = idx[i]
        row = row[row != i][:k] if np.any(row == i) else row[:k]
        counts[i] = np.count_nonzero(row >= n)
    return counts


def select_side_info(inp: RescoringInput, cutoff: float = 0.01, df: int = 5) -> np.ndarray:
    """Columns of the side information whose smooth fit to ``W * L~`` has
    a p-value below ``cutoff``. Zero-scoring hypotheses, when supplied,
    enter with response 0."""
    x = inp.side_info
    y = inp.scores * inp.pseudo_labels
    if inp.zero_side_info is not None and inp.zero_side_info.shape[0]:
        x = np.vstack([x, inp.zero_side_info])
        y = np.concatenate([y, np.zeros(inp.zero_side_info.shape[0])])
    keep = []
    for j in range(x.shape[1]):
        pval = smooth_association_pvalue(x[:, j], y, df)
        if pval < cutoff:
            keep.append(j)
    return np.asarray(keep, dtype=np.int64)


@dataclass(frozen=True)
class FeatureSet:
    matrix: np.ndarray
    names: tuple
    retained: np.ndarray
    knn_column: bool


def build_features(inp: RescoringInput, config: EnsembleConfig) -> FeatureSet:
    retained = select_side_info(inp, config.sideinfo_p_cutoff) if inp.side_info.shape[1] else np.empty(0, np.int64)
    cols = [inp.scores[:, None], inp.side_info[:, retained]]
    names = ["W"] + [f"x{j}" for j in retained]
    knn_col = inp.zero_side_info is not None and inp.zero_side_info.shape[0] > 0 and inp.side_info.shape[1] > 0
    if knn_col:
        cols.append(knn_zero_feature(inp.side_info, inp.zero_side_info, config.knn)[:, None])
        names.append("knn_zero")
    LOGGER.info("features: %s", ", ".join(names))
    return FeatureSet(np.hstack(cols), tuple(names), retained, knn_col)


def initial_positive_set(
    inp: RescoringInput,
    features: FeatureSet,
    config: EnsembleConfig,
    alpha: float,
    tie_rng: np.random.Generator,
) -> np.ndarray:
    """Pseudo targets discovered at ``alpha0`` under the best single feature.

    Candidate orderings are the score (descending) and every other feature
    in both directions, since the sign of a side-information effect is
    unknown. The candidate with the most pseudo discoveries at ``alpha``
    wins; earlier candidates win ties.
    """
    c = ensemble_c(inp.c0, inp.s, config.adjust_c)
    candidates = [features.matrix[:, 0]]
    for j in range(1, features.matrix.shape[1]):
        candidates += [features.matrix[:, j], -features.matrix[:, j]]
    best, best_count = None, -1
    for values in candidates:
        ranking = PseudoRanking(inp.pseudo_labels, values, c, tie_rng)
        count = ranking.discovered(alpha).size
        if count > best_count:
            best, best_count = ranking, count
    positive, level = best.escalate(config.alpha0, config.min_positive)
    LOGGER.info("initial positive set: %d pseudo targets at alpha0=%.2f", positive.size, level)
    return positive


# --------------------------------------------------------------------------
# model evaluation


def fold_assignment(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Random partition into K folds whose sizes differ by at most one."""
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % K
    return folds


@dataclass(frozen=True)
class Evaluation:
    counts: np.ndarray  # (n_models,) total pseudo discoveries
    scores: np.ndarray  # (n_models, r, n) out-of-fold decision values
    folds: np.ndarray  # (r, n)
    failures: tuple

    @property
    def winner(self) -> int:
        return int(np.argmax(self.counts))


def _fit_fold(spec, X, y, rng, fallback):
    try:
        return train(spec, X, y, rng)
    except TrainingError as exc:
        if spec.kind == "spline" and fallback is not None:
            LOGGER.info("%s failed (%s); switching to random forest", spec.name, exc)
            return train(fallback, X, y, rng)
        raise


def _evaluate_task(spec, X, pseudo_labels, positive_mask, folds, K, alpha, c, seed, fallback):
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    out = np.empty(n)
    count = 0
    failures = []
    negative_mask = pseudo_labels == -1
    for k in range(K):
        test = folds == k
        trainable = ~test & (positive_mask | negative_mask)
        y = np.where(positive_mask[trainable], 1, -1)
        try:
            model = _fit_fold(spec, X[trainable], y, rng, fallback)
            out[test] = score(model, X[test])
            count += sss_count(pseudo_labels[test], out[test], alpha, c, rng)
        except TrainingError as exc:
            LOGGER.warning("%s failed on fold %d: %s", spec.name, k, exc)
            out[test] = np.mean(y == 1) if y.size else 0.5
            failures.append((spec.name, k, str(exc)))
    return out, count, failures


def evaluate_models(
    inp: RescoringInput,
    features: np.ndarray,
    positive: np.ndarray,
    config: EnsembleConfig,
    alpha: float,
    rng: np.random.Generator,
) -> Evaluation:
    """Cross-validated pseudo-discovery counts for every model in the grid.

    Every repetition draws one fold partition shared by all models, so the
    models are compared on identical splits. Tasks run through joblib and
    are reduced in (model, repetition) order.
    """
    n = inp.n
    c = ensemble_c(inp.c0, inp.s, config.adjust_c)
    positive_mask = np.zeros(n, dtype=bool)
    positive_mask[positive] = True
    folds = np.stack([fold_assignment(n, config.K, rng) for _ in range(config.r)])
    seeds = rng.integers(2**63 - 1, size=(len(config.grid), config.r))
    fallback = next((s for s in config.grid if s.kind == "rf"), ClassifierSpec("rf"))

    tasks = [
        delayed(_evaluate_task)(
            spec, features, inp.pseudo_labels, positive_mask, folds[rep], config.K, alpha, c, int(seeds[m, rep]), fallback
        )
        for m, spec in enumerate(config.grid)
        for rep in range(config.r)
    ]
    results = Parallel(n_jobs=config.n_jobs)(tasks)

    scores = np.empty((len(config.grid), config.r, n))
    counts = np.zeros(len(config.grid), dtype=np.int64)
    failures = []
    for t, (out, count, fail) in enumerate(results):
        m, rep = divmod(t, config.r)
        scores[m, rep] = out
        counts[m] += count
        failures.extend(fail)
    return Evaluation(counts=counts, scores=scores, folds=folds, failures=tuple(failures))


def rescore(evaluation: Evaluation, model_index: int | None = None) -> np.ndarray:
    """Average out-of-fold decision value per hypothesis over repetitions."""
    m = evaluation.winner if model_index is None else model_index
    return evaluation.scores[m].mean(axis=0)


# --------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class EnsembleResult:
    rescored: np.ndarray
    features: FeatureSet
    winners: tuple  # model name per pass
    counts: tuple  # per-pass count vectors
    positive_sizes: tuple


def run_ensemble(inp: RescoringInput, config: EnsembleConfig, alpha: float, seeds: SeedSpec) -> EnsembleResult:
    """Two-pass semi-supervised rescoring; returns the final scores."""
    level = config.alpha if config.alpha is not None else alpha
    c = ensemble_c(inp.c0, inp.s, config.adjust_c)
    tie_rng = seeds.stream("tie_break")
    fold_rng = seeds.stream("fold_assignment")

    if inp.training_decoys.size == 0 or inp.pseudo_targets.size == 0:
        LOGGER.warning("no training decoys or no pseudo targets; keeping the original scores")
        features = FeatureSet(inp.scores[:, None], ("W",), np.empty(0, np.int64), False)
        return EnsembleResult(inp.scores.copy(), features, (), (), ())

    features = build_features(inp, config)
    positive = initial_positive_set(inp, features, config, level, tie_rng)

    winners, counts, sizes = [], [], [positive.size]
    rescored = None
    for pass_no in range(2):
        evaluation = evaluate_models(inp, features.matrix, positive, config, level, fold_rng)
        rescored = rescore(evaluation)
        winners.append(config.grid[evaluation.winner].name)
        counts.append(evaluation.counts)
        LOGGER.info("pass %d winner: %s (%d pseudo discoveries)", pass_no + 1, winners[-1], evaluation.counts.max())
        if pass_no == 0:
            ranking = PseudoRanking(inp.pseudo_labels, rescored, c, tie_rng)
            positive, _ = ranking.escalate(level, config.min_positive)
            sizes.append(positive.size)
    return EnsembleResult(rescored, features, tuple(winners), tuple(counts), tuple(sizes))
