"""Classifier families used by the rescoring ensemble behind one contract.

``train`` fits a :class:`ClassifierSpec` to a feature matrix and +1/-1
labels; ``score`` returns one real per row, higher meaning more
target-like.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forest import VotingForest
from .nnet import NeuralNetClassifier
from .spline import SplineAdditiveClassifier, SplineFitError

LOGGER = logging.getLogger(__name__)

NN_DECAYS = (0.0, 0.1, 1.0)
NN_HIDDEN = (2, 5, 10)


class TrainingError(RuntimeError):
    """Raised when a classifier cannot be fitted to the given data."""


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str  # "rf", "spline" or "nn"
    nn_decay: float = 0.0
    nn_hidden: int = 5
    nn_maxiter: int = 500
    rf_trees: int = 500
    rf_mtry: int | None = None
    spline_df: int = 5

    def __post_init__(self):
        if self.kind not in ("rf", "spline", "nn"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.rf_trees < 1:
            raise ValueError("rf_trees must be >= 1")
        if self.kind == "nn" and self.nn_hidden < 1:
            raise ValueError("nn_hidden must be >= 1")

    @property
    def name(self) -> str:
        if self.kind == "rf":
            return "RF"
        if self.kind == "spline":
            return "SplineAM"
        return f"NN(decay={self.nn_decay:g},hidden={self.nn_hidden})"


def default_grid(rf_trees: int = 500, nn_maxiter: int = 500) -> tuple[ClassifierSpec, ...]:
    """RF, SplineAM, then the 3 x 3 network grid in decay-major order."""
    grid = [ClassifierSpec("rf", rf_trees=rf_trees), ClassifierSpec("spline")]
    for decay in NN_DECAYS:
        for hidden in NN_HIDDEN:
            grid.append(ClassifierSpec("nn", nn_decay=decay, nn_hidden=hidden, nn_maxiter=nn_maxiter))
    return tuple(grid)


@dataclass(frozen=True)
class TrainedScorer:
    spec: ClassifierSpec
    n_features: int
    model: object = field(repr=False)
    keep: np.ndarray = field(repr=False)
    seed: int = 0

    def score(self, features) -> np.ndarray:
        return score(self, features)


def train(spec: ClassifierSpec, features, labels, rng: np.random.Generator) -> TrainedScorer:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("features must be a matrix with one row per label")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise TrainingError("training labels contain a single class")
    seed = int(rng.integers(2**63 - 1))
    fit_rng = np.random.default_rng(seed)

    varying = X.std(axis=0) > 0
    keep = np.ones(X.shape[1], dtype=bool)
    if spec.kind != "rf":
        keep = varying
        if not keep.all():
            warnings.warn(f"{spec.name}: dropping {int((~keep).sum())} constant feature(s)", RuntimeWarning)
    Xk = X[:, keep]

    if not varying.any():
        model = _BaseRate(float(np.mean(y == 1)))
    elif spec.kind == "rf":
        model = VotingForest(spec.rf_trees, spec.rf_mtry).fit(Xk, y, fit_rng)
    elif spec.kind == "nn":
        model = NeuralNetClassifier(spec.nn_hidden, spec.nn_decay, spec.nn_maxiter).fit(Xk, y, fit_rng)
    else:
        try:
            model = SplineAdditiveClassifier(spec.spline_df).fit(Xk, y)
        except (SplineFitError, np.linalg.LinAlgError) as exc:
            raise TrainingError(f"spline additive model failed: {exc}") from exc
    return TrainedScorer(spec=spec, n_features=X.shape[1], model=model, keep=keep, seed=seed)


def score(model: TrainedScorer, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] == 0:
        return np.empty(0)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    out = model.model.predict_proba(X[:, model.keep])
    return np.nan_to_num(out, nan=0.5)


class _BaseRate:
    """Stand-in when every feature is constant: predicts the training rate."""

    def __init__(self, rate):
        self.rate = rate

    def predict_proba(self, X):
        return np.full(X.shape[0], self.rate)


__all__ = [
    "ClassifierSpec",
    "TrainedScorer",
    "TrainingError",
    "default_grid",
    "train",
    "score",
    "NN_DECAYS",
    "NN_HIDDEN",
]
