"""Natural cubic spline bases and additive models built on them.

The basis follows the truncated-power construction for natural cubic
splines: with knots ``xi_1 < ... < xi_K`` (boundary knots included) the
functions ``x, d_1 - d_{K-1}, ..., d_{K-2} - d_{K-1}`` together with the
constant span all cubic splines that are linear beyond the boundary knots.
``df`` columns (no intercept) need ``df - 1`` interior knots placed at
quantiles of the training data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

LOGGER = logging.getLogger(__name__)


class SplineFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class NaturalSplineBasis:
    knots: np.ndarray  # scaled to [0, 1]
    lo: float
    span: float

    @property
    def df(self) -> int:
        return max(self.knots.shape[0] - 1, 1)

    @classmethod
    def fit(cls, x, df: int = 5) -> "NaturalSplineBasis":
        x = np.asarray(x, dtype=np.float64)
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            raise SplineFitError("constant feature")
        u = (x - lo) / (hi - lo)
        probs = np.linspace(0, 1, df + 1)[1:-1]
        interior = np.unique(np.quantile(u, probs))
        interior = interior[(interior > 0) & (interior < 1)]
        knots = np.concatenate([[0.0], interior, [1.0]])
        return cls(knots=knots, lo=lo, span=hi - lo)

    def transform(self, x) -> np.ndarray:
        u = (np.asarray(x, dtype=np.float64) - self.lo) / self.span
        K = self.knots.shape[0]
        if K < 3:
            return u[:, None]
        last = self.knots[-1]

        def d(k):
            return (np.maximum(u - self.knots[k], 0) ** 3 - np.maximum(u - last, 0) ** 3) / (last - self.knots[k])

        dlast = d(K - 2)
        cols = [u] + [d(k) - dlast for k in range(K - 2)]
        return np.column_stack(cols)


class AdditiveDesign:
    """Per-feature spline (or linear) expansion with column standardization."""

    def __init__(self, df: int = 5, basis: str = "spline", min_unique: int = 6):
        self.df = df
        self.basis = basis
        self.min_unique = min_unique

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.expansions_ = []
        for j in range(X.shape[1]):
            col = X[:, j]
            if self.basis == "linear" or np.unique(col).shape[0] < self.min_unique:
                self.expansions_.append(None)
            else:
                self.expansions_.append(NaturalSplineBasis.fit(col, self.df))
        B = self._raw(X)
        self.mean_ = B.mean(axis=0)
        sd = B.std(axis=0)
        if np.any(sd <= 0):
            raise SplineFitError("degenerate basis column")
        self.sd_ = sd
        return self

    def _raw(self, X):
        cols = []
        for j, e in enumerate(self.expansions_):
            cols.append(X[:, [j]] if e is None else e.transform(X[:, j]))
        return np.hstack(cols) if cols else np.empty((X.shape[0], 0))

    def transform(self, X) -> np.ndarray:
        B = (self._raw(np.asarray(X, dtype=np.float64)) - self.mean_) / self.sd_
        return np.hstack([np.ones((B.shape[0], 1)), B])


def logistic_irls(Z, y01, max_iter: int = 100, tol: float = 1e-10, ridge: float = 1e-8):
    """Maximum likelihood logistic regression by IRLS with step halving.

    ``ridge`` is added to the diagonal (intercept excluded) only to keep
    the normal equations solvable under separation; at the default size it
    does not move the fit for non-separable data.
    """
    n, p = Z.shape
    beta = np.zeros(p)
    pen = np.full(p, ridge * n)
    pen[0] = 0.0

    def deviance(b):
        eta = np.clip(Z @ b, -35, 35)
        return 2 * np.sum(np.logaddexp(0, eta) - y01 * eta) + np.sum(pen * b * b)

    dev = deviance(beta)
    for _ in range(max_iter):
        eta = np.clip(Z @ beta, -35, 35)
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-10)
        grad = Z.T @ (y01 - mu) - pen * beta
        H = (Z * w[:, None]).T @ Z + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise SplineFitError("singular information matrix") from exc
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            new = deviance(cand)
            if new <= dev + 1e-12 * abs(dev):
                break
            t *= 0.5
        else:
            break
        converged = abs(dev - new) <= tol * (abs(new) + 0.1)
        beta, dev = cand, new
        if converged:
            break
    if not np.all(np.isfinite(beta)):
        raise SplineFitError("IRLS diverged")
    return beta


class SplineAdditiveClassifier:
    def __init__(self, df: int = 5, basis: str = "spline"):
        self.df = df
        self.basis = basis

    def fit(self, X, y):
        y01 = (np.asarray(y) == 1).astype(np.float64)
        self.design_ = AdditiveDesign(self.df, self.basis).fit(X)
        self.coef_ = logistic_irls(self.design_.transform(X), y01)
        return self

    def decision(self, X) -> np.ndarray:
        return self.design_.transform(X) @ self.coef_

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision(X))


def smooth_association_pvalue(x, y, df: int = 5) -> float:
    """P-value for association between ``y`` and a smooth function of ``x``.

    Fits ``y ~ ns(x, df)`` by least squares and returns the F-test p-value
    against the intercept-only model. Falls back to a straight-line fit when
    the spline basis cannot be built (too few distinct values).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if np.unique(x).shape[0] < 2:
        return 1.0
    try:
        if np.unique(x).shape[0] < df + 1:
            raise SplineFitError("too few distinct values for the spline basis")
        B = NaturalSplineBasis.fit(x, df).transform(x)
    except SplineFitError:
        LOGGER.debug("spline basis failed; using a linear fit")
        B = x[:, None]
    Z = np.hstack([np.ones((n, 1)), B])
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    q = rank - 1
    dof = n - rank
    if q <= 0 or dof <= 0:
        return 1.0
    rss1 = float(np.sum((y - Z @ coef) ** 2))
    rss0 = float(np.sum((y - y.mean()) ** 2))
    if rss0 <= 0:
        return 1.0
    if rss1 <= 1e-12 * rss0:
        return 0.0
    F = ((rss0 - rss1) / q) / (rss1 / dof)
    return float(stats.f.sf(F, q, dof))
