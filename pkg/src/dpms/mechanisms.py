"""Noise primitives and privacy calibration.

Laplace sampling, tight Gaussian scale calibration, Wishart-based Gram
matrix error, and the noise-scale rule for subsample-and-aggregate
releases.  Everything is pure given a ``numpy.random.Generator``; callers
own their streams (see :func:`child_rng`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .errors import ConfigError, NumericError, WrongMechanismError

__all__ = [
    "PrivacyBudget",
    "Sensitivity",
    "NoiseDraw",
    "NoiseScale",
    "child_rng",
    "laplace_noise",
    "analytic_gaussian_sigma",
    "classical_gaussian_sigma",
    "subsample_noise_scale",
    "draw_subsample_noise",
    "laplace_gram_scale",
    "laplace_gram_error",
    "wishart_dof",
    "wishart_gram_error",
]


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy parameters (epsilon, delta).

    ``delta == 0`` selects pure-epsilon mechanisms (Laplace family);
    ``delta > 0`` selects the (epsilon, delta) mechanisms (analytic
    Gaussian, Wishart).
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon must be a positive finite real, got {self.epsilon}")
        if not (0.0 <= self.delta <= 1.0):
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")

    @property
    def pure(self) -> bool:
        return self.delta == 0.0


@dataclass(frozen=True)
class Sensitivity:
    """Global sensitivity bounds: l1 is the per-entry data bound, l2 the
    row Euclidean-norm bound."""

    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        for name in ("l1", "l2"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"sensitivity {name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class NoiseScale:
    """Mechanism tag plus realized noise scale.

    For ``laplace`` the scale is the Laplace scale parameter b; for
    ``gaussian`` it is the standard deviation.
    """

    mechanism: str  # "laplace" | "gaussian"
    scale: float


@dataclass(frozen=True)
class NoiseDraw:
    """One realized noise value with its provenance."""

    value: float
    scale: float
    mechanism: str

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError(f"noise scale must be positive, got {self.scale}")


def child_rng(root_seed: int, *indices: int) -> np.random.Generator:
    """Derive an independent child stream from a root seed by stable index.

    Children are independent of scheduling order, so parallel tasks that
    each own ``child_rng(seed, task_index)`` are reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(indices)))


def laplace_noise(scale: float, rng: np.random.Generator) -> float:
    """One draw from Laplace(0, scale)."""
    if not scale > 0:
        raise ConfigError(f"Laplace scale must be positive, got {scale}")
    return float(rng.laplace(0.0, scale))


def _gaussian_delta(sigma: float, epsilon: float, l2: float) -> float:
    """Exact privacy loss delta of the Gaussian mechanism at scale sigma.

    delta(sigma) = Phi(l2/(2 sigma) - eps sigma/l2)
                   - e^eps Phi(-l2/(2 sigma) - eps sigma/l2),
    evaluated through log_ndtr so the e^eps factor cannot overflow.
    """
    a = l2 / (2.0 * sigma) - epsilon * sigma / l2
    b = -l2 / (2.0 * sigma) - epsilon * sigma / l2
    return float(np.exp(log_ndtr(a)) - np.exp(epsilon + log_ndtr(b)))


def classical_gaussian_sigma(budget: PrivacyBudget, l2: float) -> float:
    """Textbook sigma = sqrt(2 ln(1.25/delta)) l2 / epsilon (valid for eps <= 1)."""
    if budget.delta <= 0:
        raise WrongMechanismError("classical Gaussian bound needs delta > 0")
    return math.sqrt(2.0 * math.log(1.25 / budget.delta)) * l2 / budget.epsilon


def analytic_gaussian_sigma(
    budget: PrivacyBudget, l2: float, *, max_iter: int = 500
) -> float:
    """Minimal Gaussian standard deviation meeting (epsilon, delta)-privacy.

    Solves delta(sigma) = delta by bisection on the exact privacy-loss
    curve; the curve is strictly decreasing in sigma, so the bracket is
    well defined.  The returned sigma satisfies delta(sigma) <= delta with
    a bracket of relative width <= 1e-12.
    """
    if budget.delta <= 0 or budget.delta > 1:
        raise WrongMechanismError(
            f"analytic Gaussian mechanism needs 0 < delta <= 1, got {budget.delta}"
        )
    if not l2 > 0:
        raise ConfigError(f"l2 sensitivity must be positive, got {l2}")
    eps, delta = budget.epsilon, budget.delta

    # The condition is scale equivariant: solve for l2 = 1 and rescale.
    hi = max(math.sqrt(2.0 * math.log(1.25 / max(delta, 1e-300))) / eps, 1.0 / eps, 1e-8)
    it = 0
    while _gaussian_delta(hi, eps, 1.0) > delta:
        hi *= 2.0
        it += 1
        if it > max_iter:
            raise NumericError(
                "failed to bracket sigma from above",
                {"epsilon": eps, "delta": delta, "hi": hi},
            )
    lo = hi
    while _gaussian_delta(lo, eps, 1.0) <= delta:
        lo /= 2.0
        it += 1
        if lo < 1e-300 or it > max_iter:
            # delta(sigma) <= delta for arbitrarily small sigma: delta ~ 1.
            return float(lo * l2)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _gaussian_delta(mid, eps, 1.0) <= delta:
            hi = mid
        else:
            lo = mid
        if (hi - lo) <= 1e-12 * hi:
            break
    else:
        raise NumericError(
            "sigma bisection did not reach tolerance",
            {"epsilon": eps, "delta": delta, "lo": lo, "hi": hi},
        )
    return float(hi * l2)


def subsample_noise_scale(bounds, M: int, budget: PrivacyBudget) -> NoiseScale:
    """Noise scale for privatizing a mean of M censored statistics.

    The mean of M subset statistics censored to [L, U] changes by at most
    (U - L)/M when one row changes.  Pure epsilon gives Laplace scale
    (U - L)/(M epsilon); delta > 0 gives the analytic Gaussian sigma for
    l2 sensitivity (U - L)/M.
    """
    if not bounds.U > bounds.L:
        raise ConfigError(f"censor bounds must satisfy L < U, got ({bounds.L}, {bounds.U})")
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    width = (bounds.U - bounds.L) / M
    if budget.pure:
        return NoiseScale("laplace", width / budget.epsilon)
    return NoiseScale("gaussian", analytic_gaussian_sigma(budget, width))


def draw_subsample_noise(spec: NoiseScale, rng: np.random.Generator) -> NoiseDraw:
    """Sample one noise value according to a NoiseScale."""
    if spec.mechanism == "laplace":
        value = laplace_noise(spec.scale, rng)
    elif spec.mechanism == "gaussian":
        value = float(rng.normal(0.0, spec.scale))
    else:
        raise ConfigError(f"unknown mechanism {spec.mechanism!r}")
    return NoiseDraw(value=value, scale=spec.scale, mechanism=spec.mechanism)


def laplace_gram_scale(p: int, epsilon: float, per_entry_sensitivity: float) -> float:
    """Per-entry Laplace scale for releasing the (p+1)x(p+1) Gram matrix.

    The upper triangle holds (p+1)(p+2)/2 statistics, so the total l1
    sensitivity is per_entry_sensitivity * (p+1)(p+2)/2 and the shared
    per-entry scale is that divided by epsilon.
    """
    if not per_entry_sensitivity > 0:
        raise ConfigError("per-entry sensitivity must be positive")
    return per_entry_sensitivity * (p + 1) * (p + 2) / (2.0 * epsilon)


def laplace_gram_error(
    p: int,
    budget: PrivacyBudget,
    per_entry_sensitivity: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Symmetric (p+1)x(p+1) error with iid Laplace upper triangle."""
    if not budget.pure:
        raise WrongMechanismError("Laplace Gram error requires delta = 0")
    scale = laplace_gram_scale(p, budget.epsilon, per_entry_sensitivity)
    m = p + 1
    draws = rng.laplace(0.0, scale, size=m * (m + 1) // 2)
    e = np.zeros((m, m))
    iu = np.triu_indices(m)
    e[iu] = draws
    e.T[iu] = draws
    return e


def wishart_dof(p: int, budget: PrivacyBudget) -> int:
    """Degrees of freedom k = floor(p + 1 + 28 log(4/delta) / epsilon^2)."""
    if budget.delta <= 0:
        raise WrongMechanismError("Wishart mechanism requires delta > 0")
    return int(math.floor(p + 1 + 28.0 * math.log(4.0 / budget.delta) / budget.epsilon**2))


def _wishart_bartlett(dim: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """One Wishart(k, I_dim) draw via the Bartlett decomposition."""
    a = np.zeros((dim, dim))
    il = np.tril_indices(dim, k=-1)
    a[il] = rng.standard_normal(dim * (dim - 1) // 2)
    a[np.diag_indices(dim)] = np.sqrt(rng.chisquare(k - np.arange(dim)))
    return a @ a.T


def wishart_gram_error(
    p: int,
    budget: PrivacyBudget,
    l2_row_bound: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Centered Wishart error E = M - k Delta2^2 I for the Gram release.

    M ~ Wishart(k, Delta2^2 I_{p+1}) with k from :func:`wishart_dof`;
    the subtraction centers at E(M), so E + k Delta2^2 I is always PSD.
    """
    if not l2_row_bound > 0:
        raise ConfigError("row-norm bound must be positive")
    k = wishart_dof(p, budget)
    m = l2_row_bound**2 * _wishart_bartlett(p + 1, k, rng)
    return m - k * l2_row_bound**2 * np.eye(p + 1)
