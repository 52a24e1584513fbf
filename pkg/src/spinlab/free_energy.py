"""Partition function and free-energy fluctuations of the generalized SK model.

The partition function averages ``exp(beta N sum_{i<j} W_ij x_i x_j / |x|^2)``
over the prior. Rademacher spins are summed exactly by Gray-code enumeration;
other priors use Monte Carlo, whose relative error grows exponentially in N
at fixed sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import log_tail
from .ensembles import PriorSpec, SeedLike, make_rng
from .errors import ConfigError, DomainError
from .kernels import DEFAULT_SPIN_CAP, gray_code_logz

MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class GaussianPrediction:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise DomainError(f"predicted variance must be nonnegative, got {self.variance}")


@dataclass(frozen=True)
class MCEstimate:
    logZ: float
    stderr: float


@dataclass(frozen=True)
class FreeEnergySample:
    beta: float
    N: int
    logZ: float
    method: str = "exact"
    stderr: float | None = None

    def __post_init__(self):
        if self.method not in ("exact", "mc"):
            raise ConfigError(f"method must be 'exact' or 'mc', got {self.method!r}")
        if self.method == "exact" and self.stderr is not None:
            raise ConfigError("exact samples carry no stderr")

    @property
    def F_N(self) -> float:
        return self.logZ / self.N

    @property
    def fluctuation(self) -> float:
        return fluctuation_statistic(self)


def _check_matrix(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {W.shape}")
    if not np.array_equal(W, W.T):
        raise ConfigError("matrix is not exactly symmetric")
    if not np.all(np.isfinite(W)):
        raise ConfigError("matrix has non-finite entries")
    return W


def partition_function_exact(W, beta: float, cap: int = DEFAULT_SPIN_CAP) -> float:
    """log Z_N(beta) for Rademacher spins, exact up to rounding."""
    W = _check_matrix(W)
    if beta == 0:
        return 0.0
    return gray_code_logz(W, beta, cap=cap)


def spike_exponents(W: np.ndarray, X: np.ndarray, normalized: bool) -> np.ndarray:
    """Row-wise N * sum_{i<j} W_ij x_i x_j (divided by |x|^2 when normalized).

    Rows with zero norm give 0, following the convention x_i x_j/|x|^2 = 0.
    """
    N = W.shape[0]
    quad = np.einsum("mi,ij,mj->m", X, W, X) - (X * X) @ np.diag(W)
    out = 0.5 * N * quad
    if normalized:
        norm2 = np.einsum("mi,mi->m", X, X)
        out = np.divide(out, norm2, out=np.zeros_like(out), where=norm2 > 0)
    return out


def log_mean_exp(values: np.ndarray) -> MCEstimate:
    """log of the mean of exp(values) with delta-method stderr (NaN for one value)."""
    values = np.asarray(values, dtype=float)
    top = values.max()
    w = np.exp(values - top)
    mean = w.mean()
    est = top + math.log(mean)
    if values.size < 2:
        return MCEstimate(est, math.nan)
    return MCEstimate(est, float(w.std(ddof=1) / math.sqrt(w.size) / mean))


def sample_spikes(prior: PriorSpec, N: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """M x N block of spikes, normalized row-wise when the prior asks for it."""
    X = prior.standard_sample(rng, (M, N)) / math.sqrt(N)
    if prior.normalized and prior.family != "rademacher":
        norm = np.linalg.norm(X, axis=1, keepdims=True)
        X = np.divide(X, norm, out=np.zeros_like(X), where=norm > 0)
    return X


def partition_function_mc(W, beta: float, prior: PriorSpec, M: int, seed: SeedLike) -> MCEstimate:
    """Monte Carlo log Z_N(beta) over M prior draws."""
    W = _check_matrix(W)
    if M < 1:
        raise ConfigError("M must be at least 1")
    if beta == 0:
        return MCEstimate(0.0, 0.0 if M > 1 else math.nan)
    rng = make_rng(seed)
    N = W.shape[0]
    parts = []
    for start in range(0, M, MC_CHUNK):
        X = sample_spikes(prior, N, min(MC_CHUNK, M - start), rng)
        parts.append(beta * spike_exponents(W, X, prior.normalized))
    return log_mean_exp(np.concatenate(parts))


def predict_free_energy_fluctuation(beta: float, w_4: float, m_4: float) -> GaussianPrediction:
    """Limiting law N(m_F, V_F) of N (F_N - beta^2/4) in the high-temperature phase."""
    if not 0 <= beta < 1:
        raise DomainError(f"beta = {beta} outside the high-temperature range 0 <= beta < 1")
    b2 = beta * beta
    k4 = w_4 - 3.0
    log1m = math.log1p(-b2)
    mean = 0.25 * log1m + b2 * (1.0 - m_4) / 4.0 + b2 * b2 * k4 * (m_4 * m_4 - 3.0) / 48.0
    # -(1/2)[log(1-b2) + b2 - b2^2 k4/4], regrouped so w_4 >= 1 gives var >= 0 exactly
    var = 0.5 * (log_tail(b2) + b2 * b2 * (w_4 - 1.0) / 4.0)
    return GaussianPrediction(mean, var)


def fluctuation_statistic(sample: FreeEnergySample) -> float:
    """N (F_N - beta^2/4)."""
    return sample.N * (sample.logZ / sample.N - sample.beta**2 / 4.0)


def free_energy_sample(W, beta: float, method: str = "exact", prior: PriorSpec | None = None,
                       M: int = 0, seed: SeedLike = 0) -> FreeEnergySample:
    W = _check_matrix(W)
    if method == "exact":
        if prior is not None and prior.family != "rademacher":
            raise ConfigError("exact enumeration needs the Rademacher prior")
        return FreeEnergySample(beta, W.shape[0], partition_function_exact(W, beta))
    est = partition_function_mc(W, beta, prior or PriorSpec(), M, seed)
    return FreeEnergySample(beta, W.shape[0], est.logZ, "mc", est.stderr)
