"""Synthetic data with known truth, and a Monte Carlo error-rate harness.

Three generators:

* :func:`simulate_geometric` -- one-sided normal tests on a 50 x 50 lattice
  with false nulls inside a region of the square.
* :func:`simulate_beta_mixture` -- two-group beta mixture driven by 100
  uniform covariates, of which only the first two matter.
* :func:`simulate_competition` -- target/decoy competition where true-null
  labels are fair coin flips independent of everything else.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit, ndtr

from .model import ConfigError, HypothesisTable, PValueTable, SeedSpec

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruth:
    false_null: np.ndarray

    @property
    def n_false(self) -> int:
        return int(self.false_null.sum())


# --------------------------------------------------------------------------
# geometric side information


SCENARIOS = {
    # name: (kind, center, radii)
    "circle_center": ("disk", (0.0, 0.0), (30.0, 30.0)),
    "circle_corner": ("disk", (65.0, 65.0), (30.0, 30.0)),
    "ellipse": ("ellipse", (0.0, 0.0), (60.0, 20.0)),
}


@dataclass(frozen=True)
class GeometricSimSpec:
    scenario: str = "circle_center"
    mu: float = 2.0
    grid_size: int = 50
    extent: float = 100.0
    center: tuple | None = None
    radii: tuple | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}")
        _, center, radii = SCENARIOS[self.scenario]
        if self.center is None:
            object.__setattr__(self, "center", center)
        if self.radii is None:
            object.__setattr__(self, "radii", radii)

    @property
    def m(self) -> int:
        return self.grid_size**2

    def lattice(self) -> np.ndarray:
        axis = np.linspace(-self.extent, self.extent, self.grid_size)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])

    def region(self, x: np.ndarray) -> np.ndarray:
        (c1, c2), (r1, r2) = self.center, self.radii
        return ((x[:, 0] - c1) / r1) ** 2 + ((x[:, 1] - c2) / r2) ** 2 <= 1


def simulate_geometric(spec: GeometricSimSpec, rng: np.random.Generator):
    """p_i = 1 - Phi(z_i), z_i ~ N(mu_i, 1); mu_i = spec.mu inside the region."""
    x = spec.lattice()
    false_null = spec.region(x)
    z = rng.standard_normal(spec.m) + np.where(false_null, spec.mu, 0.0)
    p = ndtr(-z)
    return PValueTable(p, x), GroundTruth(false_null)


# --------------------------------------------------------------------------
# beta mixture with 100-dimensional side information


def _coef(lead, d):
    v = np.zeros(d)
    v[: len(lead)] = lead
    return v


@dataclass(frozen=True)
class BetaMixtureSpec:
    m: int = 2000
    d: int = 100
    theta: np.ndarray = field(default_factory=lambda: _coef((3.0, 3.0), 100))
    beta: np.ndarray = field(default_factory=lambda: _coef((2.0, 2.0), 100))
    target_pi: float = 0.3


def solve_theta0(lin: np.ndarray, target: float, max_iter: int = 200) -> tuple[float, int]:
    """Intercept giving ``mean(expit(theta0 + lin)) == target`` by bisection.

    The mean is strictly increasing in ``theta0``; the bracket is widened
    until it contains the root.
    """
    lo, hi = -1.0, 1.0
    while np.mean(expit(lo + lin)) > target:
        lo *= 2
    while np.mean(expit(hi + lin)) < target:
        hi *= 2
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        gap = np.mean(expit(mid + lin)) - target
        if gap == 0 or hi - lo < 1e-13:
            return mid, it
        if gap < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), max_iter


def simulate_beta_mixture(spec: BetaMixtureSpec, rng: np.random.Generator):
    """Draw covariates, false-null indicators and p-values.

    False-null p-values follow Beta(1/mu, 1), sampled as ``U ** mu``.
    """
    x = rng.random((spec.m, spec.d))
    lin = x @ spec.theta
    theta0, _ = solve_theta0(lin, spec.target_pi)
    pi = expit(theta0 + lin)
    mu = np.maximum(x @ spec.beta, 1.0)
    false_null = rng.random(spec.m) < pi
    u = rng.random(spec.m)
    p = np.where(false_null, u**mu, rng.random(spec.m))
    return PValueTable(p, x), GroundTruth(false_null)


# --------------------------------------------------------------------------
# target-decoy competition


@dataclass(frozen=True)
class CompetitionSimSpec:
    m: int = 500
    false_null_fraction: float = 0.0
    alt_shift: float = 2.0
    side_shift: float = 2.0
    side_dim: int = 2


def simulate_competition(spec: CompetitionSimSpec, rng: np.random.Generator):
    """Paired scores ``Z`` (target) and ``Z~`` (decoy), both N(0, 1) for true
    nulls; false nulls shift ``Z`` by ``alt_shift``. ``W = max(Z, Z~)``,
    ``L = sign(Z - Z~)``. Side information is N(0, I) for true nulls and
    N(+/-side_shift * 1, I) for false nulls with a random sign.
    """
    m = spec.m
    false_null = rng.random(m) < spec.false_null_fraction
    z = rng.standard_normal(m) + np.where(false_null, spec.alt_shift, 0.0)
    z_decoy = rng.standard_normal(m)
    ties = rng.random(m) < 0.5
    labels = np.where(z > z_decoy, 1, np.where(z < z_decoy, -1, np.where(ties, 1, -1)))
    w = np.maximum(z, z_decoy)
    sign = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    x = rng.standard_normal((m, spec.side_dim)) + (false_null * sign * spec.side_shift)[:, None]
    return HypothesisTable(labels, w, x), GroundTruth(false_null)


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MonteCarloReport:
    runs: int
    alpha: float
    fdr: float
    fdr_se: float
    p_fdp_exceed: float
    p_fdp_exceed_se: float
    power: float
    power_se: float
    mean_discoveries: float
    fdp: np.ndarray = field(repr=False)
    powers: np.ndarray = field(repr=False)
    discoveries: np.ndarray = field(repr=False)

    def as_row(self) -> dict:
        return {
            "alpha": self.alpha,
            "runs": self.runs,
            "empirical_fdr": self.fdr,
            "fdr_se": self.fdr_se,
            "power": self.power,
            "power_se": self.power_se,
            "p_fdp_exceed": self.p_fdp_exceed,
            "p_fdp_exceed_se": self.p_fdp_exceed_se,
            "mean_discoveries": self.mean_discoveries,
        }


def false_discovery_proportion(found, truth: GroundTruth) -> float:
    found = np.asarray(found, dtype=np.int64)
    if found.size == 0:
        return 0.0
    return float(np.mean(~truth.false_null[found]))


def true_positive_rate(found, truth: GroundTruth) -> float:
    if truth.n_false == 0:
        return np.nan
    found = np.asarray(found, dtype=np.int64)
    return float(truth.false_null[found].sum() / truth.n_false)


def _mean_se(v):
    v = np.asarray(v, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return np.nan, np.nan
    se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), float(se)


def _one_run(generator, method, seeds: SeedSpec):
    data, truth = generator(seeds.stream("simulation"))
    found = np.asarray(method(data, seeds), dtype=np.int64)
    return false_discovery_proportion(found, truth), true_positive_rate(found, truth), found.size


def monte_carlo_validate(
    generator: Callable,
    method: Callable,
    alpha: float,
    runs: int,
    seeds: SeedSpec,
    n_jobs: int = 1,
) -> MonteCarloReport:
    """Estimate FDR, P(FDP > alpha) and power over ``runs`` replicates.

    ``generator(rng)`` returns ``(data, GroundTruth)``; ``method(data,
    seeds)`` returns the indices it discovers. Run ``j`` uses
    ``seeds.child(j)``, so results do not depend on ``n_jobs``.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    out = Parallel(n_jobs=n_jobs)(delayed(_one_run)(generator, method, seeds.child(j)) for j in range(runs))
    fdp = np.array([o[0] for o in out])
    powers = np.array([o[1] for o in out])
    disc = np.array([o[2] for o in out])
    fdr, fdr_se = _mean_se(fdp)
    exceed, exceed_se = _mean_se(fdp > alpha)
    power, power_se = _mean_se(powers)
    return MonteCarloReport(
        runs=runs,
        alpha=alpha,
        fdr=fdr,
        fdr_se=fdr_se,
        p_fdp_exceed=exceed,
        p_fdp_exceed_se=exceed_se,
        power=power,
        power_se=power_se,
        mean_discoveries=float(disc.mean()),
        fdp=fdp,
        powers=powers,
        discoveries=disc,
    )
