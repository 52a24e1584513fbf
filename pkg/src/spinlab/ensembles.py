"""Wigner disorder matrices, spike/spin priors and their normalized moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .density import DensityModel, gaussian_density
from .errors import ConfigError, MomentRangeError

DISORDER_FAMILIES = ("gaussian", "rademacher-scaled", "uniform-scaled", "custom-density")
PRIOR_FAMILIES = ("rademacher", "gaussian", "uniform", "bounded-custom")

SeedLike = int | np.random.SeedSequence | np.random.Generator


def make_rng(seed: SeedLike, *keys: int) -> np.random.Generator:
    """Generator for the stream keyed by ``(seed, *keys)``.

    Keys enter the SeedSequence spawn key, so streams for different trial or
    entity indices are independent and do not depend on scheduling order.
    """
    if isinstance(seed, np.random.Generator) and not keys:
        return seed
    return np.random.default_rng(derive_seed(seed, *keys))


def derive_seed(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """SeedSequence for the child stream ``(seed, *keys)``."""
    if isinstance(seed, np.random.Generator):
        raise ConfigError("cannot derive keyed streams from an existing Generator")
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    if int(seed) < 0:
        raise ConfigError(f"seed must be nonnegative, got {seed}")
    return np.random.SeedSequence(int(seed), spawn_key=keys)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


class _InverseCDF:
    """Tabulated inverse CDF of a symmetric density on [-R, R]."""

    def __init__(self, pdf: Callable, R: float, n: int = 20001):
        grid = np.linspace(-R, R, n)
        dens = np.maximum(pdf(grid), 0.0)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        self.grid, self.cdf = grid[keep], cdf[keep]

    def __call__(self, u):
        return np.interp(u, self.cdf, self.grid)


@dataclass(frozen=True)
class DisorderSpec:
    """Law of the noise entries. ``sqrt(N) W_ij`` has unit variance off the diagonal
    and variance ``w_2`` on it; ``density`` is the law of ``sqrt(N) W_ij``."""

    family: str = "gaussian"
    w_2: float = 2.0
    density: DensityModel | None = None

    def __post_init__(self):
        if self.family not in DISORDER_FAMILIES:
            raise ConfigError(f"unknown disorder family {self.family!r}; known: {DISORDER_FAMILIES}")
        if not (self.w_2 >= 0 and math.isfinite(self.w_2)):
            raise ConfigError(f"w_2 must be a finite nonnegative number, got {self.w_2}")
        if self.family == "custom-density":
            if self.density is None:
                raise ConfigError("custom-density disorder needs a density")
            var = self.density.moment(2)
            if abs(var - 1.0) > 1e-6:
                raise ConfigError(
                    f"custom density {self.density.name!r} has variance {var:.10g}; "
                    "it must be normalized to unit variance"
                )
        if self.family == "gaussian" and self.density is None:
            object.__setattr__(self, "density", gaussian_density())

    @cached_property
    def w_4(self) -> float:
        return self.moment(4)

    @property
    def kappa_4(self) -> float:
        return self.w_4 - 3.0

    def moment(self, k: int) -> float:
        """E[(sqrt(N) W_ij)^k] for off-diagonal entries."""
        if k % 2:
            return 0.0
        if self.family == "gaussian":
            return float(_double_factorial(k - 1))
        if self.family == "rademacher-scaled":
            return 1.0
        if self.family == "uniform-scaled":
            return 3.0 ** (k / 2) / (k + 1)
        return self.density.moment(k)

    @cached_property
    def _icdf(self) -> _InverseCDF:
        return _InverseCDF(self.density.pdf, self.density.support_radius())

    def standard_sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draws of the unit-variance shape ``sqrt(N) W_ij``."""
        if self.family == "gaussian":
            return rng.standard_normal(size)
        if self.family == "rademacher-scaled":
            return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
        if self.family == "uniform-scaled":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        return self._icdf(rng.random(size))

    def noise_pair(self) -> tuple[DensityModel, DensityModel]:
        """Off-diagonal and diagonal densities for likelihood-ratio mode."""
        if self.density is None:
            raise ConfigError(f"disorder family {self.family!r} has no density (LR mode needs one)")
        if self.w_2 <= 0:
            raise ConfigError("LR mode needs w_2 > 0 so the diagonal has a density")
        return self.density, self.density.scaled(self.w_2, f"{self.density.name}*{self.w_2:g}")


@dataclass(frozen=True)
class PriorSpec:
    """Law of the spike entries; ``sqrt(N) x_i`` has unit variance.

    ``bounded-custom`` takes an (unnormalized) density on [-K, K]; it is
    normalized and rescaled to unit variance.
    """

    family: str = "rademacher"
    normalized: bool = False
    max_degree: int = 16
    custom_pdf: Callable | None = field(default=None, compare=False)
    K: float | None = None

    def __post_init__(self):
        if self.family not in PRIOR_FAMILIES:
            raise ConfigError(f"unknown prior family {self.family!r}; known: {PRIOR_FAMILIES}")
        if self.max_degree < 8 or self.max_degree % 2:
            raise ConfigError("max_degree must be even and at least 8")
        if self.family == "bounded-custom":
            if self.custom_pdf is None or self.K is None or not self.K > 0:
                raise ConfigError("bounded-custom prior needs custom_pdf and K > 0")

    @cached_property
    def _custom_raw(self) -> tuple[float, float]:
        """(normalizing mass, standard deviation) of the raw custom density."""
        f = self.custom_pdf
        opts = dict(epsabs=0.0, epsrel=1e-10, limit=400)
        mass = 2.0 * integrate.quad(f, 0.0, self.K, **opts)[0]
        if not mass > 0:
            raise ConfigError("bounded-custom prior density has zero mass")
        var = 2.0 * integrate.quad(lambda u: u * u * f(u), 0.0, self.K, **opts)[0] / mass
        return mass, math.sqrt(var)

    @cached_property
    def moment_table(self) -> dict[int, float]:
        """mu_d = E[(sqrt(N) x_1)^d] for even d up to max_degree."""
        degrees = range(0, self.max_degree + 1, 2)
        if self.family == "rademacher":
            return {d: 1.0 for d in degrees}
        if self.family == "gaussian":
            return {d: float(_double_factorial(d - 1)) for d in degrees}
        if self.family == "uniform":
            return {d: 3.0 ** (d / 2) / (d + 1) for d in degrees}
        mass, sd = self._custom_raw
        out = {}
        for d in degrees:
            raw = 2.0 * integrate.quad(
                lambda u: u**d * self.custom_pdf(u), 0.0, self.K, epsabs=0.0, epsrel=1e-10, limit=400
            )[0]
            out[d] = raw / mass / sd**d
        out[0], out[2] = 1.0, 1.0
        return out

    def mu(self, d: int) -> float:
        if d < 0:
            raise MomentRangeError(f"negative moment degree {d}")
        if d % 2:
            return 0.0
        if d > self.max_degree:
            raise MomentRangeError(f"moment degree {d} exceeds tabulated max_degree {self.max_degree}")
        return self.moment_table[d]

    @property
    def m_4(self) -> float:
        return self.mu(4)

    @property
    def m_8(self) -> float:
        return self.mu(8)

    @cached_property
    def _icdf(self) -> _InverseCDF:
        mass, sd = self._custom_raw
        return _InverseCDF(lambda u: np.vectorize(self.custom_pdf)(u * sd), self.K / sd)

    def standard_sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draws of ``sqrt(N) x_i``."""
        if self.family == "rademacher":
            return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
        if self.family == "gaussian":
            return rng.standard_normal(size)
        if self.family == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        return self._icdf(rng.random(size))


def sample_wigner(spec: DisorderSpec, N: int, seed: SeedLike) -> np.ndarray:
    """Symmetric N x N matrix with off-diagonal variance 1/N and diagonal variance w_2/N.

    Off-diagonal draws fill the strict upper triangle row by row, then the
    diagonal is drawn, so a given seed maps to one matrix.
    """
    if N < 2:
        raise ConfigError(f"Wigner matrix needs N >= 2, got {N}")
    rng = make_rng(seed)
    iu = np.triu_indices(N, 1)
    W = np.zeros((N, N))
    W[iu] = spec.standard_sample(rng, iu[0].size) / math.sqrt(N)
    W = W + W.T
    W[np.diag_indices(N)] = spec.standard_sample(rng, N) * math.sqrt(spec.w_2 / N)
    return W


def sample_spike(prior: PriorSpec, N: int, seed: SeedLike) -> np.ndarray:
    """Spike vector with E[x_i^2] = 1/N, divided by its norm for normalized priors.

    Rademacher spikes already have unit norm and skip the division, so both
    modes return identical bits. A zero vector is returned unchanged.
    """
    if N < 1:
        raise ConfigError(f"spike needs N >= 1, got {N}")
    x = prior.standard_sample(make_rng(seed), N) / math.sqrt(N)
    if prior.normalized and prior.family != "rademacher":
        norm = np.linalg.norm(x)
        if norm > 0:
            x = x / norm
    return x


def disorder_moments(spec: DisorderSpec) -> dict[str, float]:
    return {"w_2": spec.w_2, "w_4": spec.w_4, "kappa_4": spec.kappa_4}


def prior_moments(prior: PriorSpec) -> dict:
    return {"m_4": prior.m_4, "m_8": prior.m_8, "mu": dict(prior.moment_table)}


@dataclass(frozen=True)
class SubGaussianReport:
    alphas: tuple[float, ...]
    estimates: tuple[float, ...]
    stderrs: tuple[float, ...]
    bounds: tuple[float, ...]
    max_excess: float
    passed: bool


def verify_strict_subgaussian(
    spec: DisorderSpec | Callable[[np.random.Generator, int], np.ndarray],
    alpha_grid,
    M: int,
    seed: SeedLike,
) -> SubGaussianReport:
    """Monte Carlo check of E[exp(alpha z)] <= exp(alpha^2/2) for z = sqrt(N) W_ij.

    ``spec`` may also be a sampler ``(rng, M) -> z`` for laws outside the
    built-in families. Passes iff every estimate is at most the bound plus
    three standard errors.
    """
    alphas = tuple(float(a) for a in alpha_grid)
    if not alphas:
        raise ConfigError("alpha_grid must be nonempty")
    sampler = spec.standard_sample if isinstance(spec, DisorderSpec) else spec
    z = np.asarray(sampler(make_rng(seed), M), dtype=float)
    est, se, bnd = [], [], []
    for a in alphas:
        v = np.exp(a * z)
        est.append(float(v.mean()))
        se.append(float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)
        bnd.append(math.exp(a * a / 2.0))
    excess = [e - b for e, b in zip(est, bnd)]
    passed = all(e <= b + 3.0 * s for e, b, s in zip(est, bnd, se))
    return SubGaussianReport(alphas, tuple(est), tuple(se), tuple(bnd), max(excess), passed)


def disorder_from_density(density: DensityModel, w_2: float = 2.0) -> DisorderSpec:
    """Custom-density disorder after checking normalization."""
    density.validate()
    return DisorderSpec("custom-density", w_2, density)


__all__ = [
    "DisorderSpec", "PriorSpec", "SubGaussianReport", "make_rng", "derive_seed", "sample_wigner", "sample_spike",
    "disorder_moments", "prior_moments", "verify_strict_subgaussian", "disorder_from_density",
    "DISORDER_FAMILIES", "PRIOR_FAMILIES",
]
