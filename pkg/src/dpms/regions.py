"""Monte-Carlo confidence regions for the Gram matrix and its summaries.

The released statistic is G*_r = G + E + r I with a fully known error
law, so a (1-alpha) region for G is obtained by subtracting a central
(1-alpha) set of error draws and intersecting with the positive-definite
cone.  Pushing every surviving candidate through the model-enumeration
map yields a histogram over any scalar summary (inclusion probability,
posterior mean coefficient); its exact mean is the histogram-mean
estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyRegionError
from .gram import GramChain, enumerate_posterior
from .linmodel import GPriorSpec, InfoCriterionSpec

__all__ = [
    "RegionConfig",
    "Functional",
    "RegionSamples",
    "FunctionalHistogram",
    "sample_region",
    "region_contains",
    "map_functional",
    "histogram_mean_estimate",
]


@dataclass(frozen=True)
class Functional:
    """Scalar summary extracted from a model posterior."""

    kind: str  # "inclusion" | "beta" | "custom"
    index: int | None = None
    fn: object | None = None  # callable(ModelPosterior) -> float for "custom"

    @classmethod
    def inclusion(cls, j: int) -> "Functional":
        return cls("inclusion", j)

    @classmethod
    def beta(cls, j: int) -> "Functional":
        return cls("beta", j)

    @classmethod
    def custom(cls, fn) -> "Functional":
        return cls("custom", None, fn)

    def extract(self, posterior) -> float:
        if self.kind == "inclusion":
            return float(posterior.inclusion[self.index])
        if self.kind == "beta":
            return float(posterior.beta_avg[self.index])
        return float(self.fn(posterior))


@dataclass(frozen=True)
class RegionConfig:
    alpha: float
    nsamples: int = 1000
    functional: Functional | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.nsamples < 100:
            raise ConfigError(f"nsamples must be >= 100, got {self.nsamples}")


class _LaplaceBox:
    """Componentwise central box for the independent Laplace error.

    Each of the m = (p+1)(p+2)/2 free coordinates gets a two-sided
    quantile interval at level (1-alpha)^(1/m), so the product set has
    probability exactly 1 - alpha.
    """

    def __init__(self, scale: float, dim: int, alpha: float):
        m = dim * (dim + 1) // 2
        q = (1.0 - alpha) ** (1.0 / m)
        self.scale = scale
        self.dim = dim
        self.half_width = -scale * math.log1p(-q)
        self.coord_level = q

    def contains(self, e: np.ndarray) -> bool:
        iu = np.triu_indices(self.dim)
        return bool(np.all(np.abs(e[iu]) <= self.half_width))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # Inverse-CDF sampling of Laplace truncated to [-w, w]: the CDF at
        # w is 1 - exp(-w/b)/2, symmetric about 1/2.
        m = self.dim * (self.dim + 1) // 2
        hi = 1.0 - 0.5 * math.exp(-self.half_width / self.scale)
        u = rng.uniform(1.0 - hi, hi, size=m)
        draws = np.where(
            u < 0.5,
            self.scale * np.log(2.0 * u),
            -self.scale * np.log(2.0 * (1.0 - u)),
        )
        e = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        e[iu] = draws
        e.T[iu] = draws
        return e


class _WishartBall:
    """Spectral-norm acceptance set for the dependent Wishart error.

    The radius is the empirical (1-alpha) quantile of the spectral norm
    over calibration draws, so rejecting the largest alpha fraction gives
    an acceptance set of probability 1 - alpha; sampling is by rejection.
    """

    def __init__(self, chain: GramChain, alpha: float, rng: np.random.Generator,
                 calibration_draws: int = 100_000):
        from .gram import _draw_error

        self._draw = lambda r: _draw_error(chain, r)
        norms = np.empty(calibration_draws)
        for i in range(calibration_draws):
            e = self._draw(rng)
            norms[i] = np.abs(np.linalg.eigvalsh(e)).max()
        self.radius = float(np.quantile(norms, 1.0 - alpha))

    def contains(self, e: np.ndarray) -> bool:
        return bool(np.abs(np.linalg.eigvalsh(e)).max() <= self.radius)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        for _ in range(10_000):
            e = self._draw(rng)
            if self.contains(e):
                return e
        raise EmptyRegionError("rejection sampling of the Wishart error set stalled")


class _ZeroNoise:
    def contains(self, e: np.ndarray) -> bool:
        return bool(np.allclose(e, 0.0))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return None  # signals "single exact candidate"


def _acceptance_set(chain: GramChain, cfg: RegionConfig, rng: np.random.Generator):
    if chain.mechanism == "laplace":
        return _LaplaceBox(chain.laplace_scale, chain.p + 1, cfg.alpha)
    if chain.mechanism == "wishart":
        return _WishartBall(chain, cfg.alpha, rng)
    if chain.mechanism == "none":
        return _ZeroNoise()
    raise ConfigError(f"no region construction for mechanism {chain.mechanism!r}")


@dataclass
class RegionSamples:
    """Positive-definite candidate matrices plus rejection diagnostics."""

    candidates: list
    rejected_non_pd: int
    n: int


def sample_region(
    chain: GramChain, cfg: RegionConfig, rng: np.random.Generator
) -> RegionSamples:
    """Draw candidate Gram matrices from the confidence region.

    Error draws E_s restricted to a central (1-alpha) acceptance set give
    candidates G_s = G* - E_s (the r I offset of the released statistic
    cancels); candidates outside the positive-definite cone are dropped
    and counted.
    """
    acc = _acceptance_set(chain, cfg, rng)
    candidates: list[np.ndarray] = []
    rejected = 0
    if isinstance(acc, _ZeroNoise):
        g = chain.g_star.copy()
        if np.linalg.eigvalsh(g)[0] > 0.0:
            return RegionSamples([g], 0, chain.n)
        raise EmptyRegionError("zero-noise Gram matrix is not positive definite")
    for _ in range(cfg.nsamples):
        e = acc.sample(rng)
        g = chain.g_star - e
        if np.linalg.eigvalsh(g)[0] > 0.0:
            candidates.append(g)
        else:
            rejected += 1
    if not candidates:
        raise EmptyRegionError(
            "every confidence-region candidate was rejected as non-positive-definite",
            {"alpha": cfg.alpha, "nsamples": cfg.nsamples, "mechanism": chain.mechanism},
        )
    return RegionSamples(candidates, rejected, chain.n)


def region_contains(chain: GramChain, g_true: np.ndarray, cfg: RegionConfig,
                    rng: np.random.Generator | None = None) -> bool:
    """Whether a matrix lies in the (1-alpha) region of the release.

    G is in the region iff the implied error G* - G falls in the central
    acceptance set (and G is positive definite, which holds for any true
    Gram matrix of a full-rank design).
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    acc = _acceptance_set(chain, cfg, rng)
    if np.linalg.eigvalsh(np.asarray(g_true))[0] <= 0.0:
        return False
    return acc.contains(chain.g_star - g_true)


@dataclass(frozen=True)
class FunctionalHistogram:
    """Histogram summary of a functional over the sampled region."""

    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    accepted: int
    rejected_non_pd: int
    samples: np.ndarray


def map_functional(
    samples: RegionSamples,
    functional: Functional,
    stat: GPriorSpec | InfoCriterionSpec,
    prior_kind: str = "hierarchical",
    bins: int = 50,
) -> FunctionalHistogram:
    """Push every candidate through model enumeration and bin the summary.

    Inclusion probabilities are binned on the fixed [0, 1] range; other
    functionals use the observed range.  The reported mean is the exact
    mean of the samples, not a binned approximation.
    """
    if not samples.candidates:
        raise EmptyRegionError("cannot histogram an empty candidate list")
    values = np.array([
        functional.extract(enumerate_posterior(g, stat, prior_kind, n=samples.n))
        for g in samples.candidates
    ])
    if functional.kind == "inclusion":
        edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return FunctionalHistogram(
        bin_edges=edges,
        counts=counts,
        mean=float(values.mean()),
        accepted=values.size,
        rejected_non_pd=samples.rejected_non_pd,
        samples=values,
    )


def histogram_mean_estimate(hist: FunctionalHistogram) -> float:
    """Histogram-mean point estimate of the functional (exact sample mean)."""
    if hist.accepted < 1:
        raise EmptyRegionError("histogram has no accepted samples")
    return hist.mean
