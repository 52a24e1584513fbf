"""Gaussian-law fits for fluctuation samples, the second-moment estimator and a
reproducible parallel trial harness."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats as sps

from .ensembles import PriorSpec, SeedLike, derive_seed, make_rng
from .errors import DomainError, SpinlabError, StatisticsError
from .free_energy import GaussianPrediction

MIN_SAMPLES = 100


@dataclass(frozen=True)
class FitTolerances:
    """Mean: |mean - m| <= z_tol * se + finite_size. Variance: |V/V_pred - 1| <= var_tol.
    KS: p >= p_tol, against N(empirical mean, V_pred) when ``recenter``."""

    z_tol: float = 3.0
    var_tol: float = 0.35
    p_tol: float = 0.001
    finite_size: float = 0.0
    recenter: bool = False


@dataclass(frozen=True)
class TrialBatch:
    samples: np.ndarray
    prediction: GaussianPrediction
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise StatisticsError("a batch needs a nonempty 1-d sample")
        if not np.all(np.isfinite(s)):
            raise StatisticsError("batch contains non-finite samples")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class FitReport:
    n: int
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    z_mean: float
    variance_ratio: float
    ks_stat: float
    ks_p: float
    passes: dict
    passed: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def ks_statistic(samples, cdf: Callable) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the empirical CDF and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_pvalue(d: float, n: int) -> float:
    """P(D_n >= d) under the null, from the exact finite-n distribution."""
    return float(min(1.0, max(0.0, sps.kstwo.sf(d, n))))


def gaussian_fit(batch: TrialBatch, tol: FitTolerances = FitTolerances()) -> FitReport:
    x = batch.samples
    n = x.size
    if n < MIN_SAMPLES:
        raise StatisticsError(f"need at least {MIN_SAMPLES} samples, got {n}")
    pred = batch.prediction
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if pred.variance == 0:
        exact = bool(np.all(np.abs(x - pred.mean) <= 1e-12 * max(1.0, abs(pred.mean))))
        passes = {"mean": exact, "variance": exact, "ks": exact}
        return FitReport(n, mean, var, 0.0, 0.0, 0.0 if exact else math.inf, 1.0 if exact else math.inf,
                         0.0 if exact else 1.0, 1.0 if exact else 0.0, passes, exact)
    if var == 0:
        raise StatisticsError("samples are constant but the prediction has positive variance")
    se = math.sqrt(var / n)
    m4 = float(np.mean((x - mean) ** 4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / n)
    z = (mean - pred.mean) / se
    ratio = var / pred.variance
    centre = mean if tol.recenter else pred.mean
    sd = math.sqrt(pred.variance)
    d = ks_statistic(x, lambda t: special.ndtr((t - centre) / sd))
    p = ks_pvalue(d, n)
    passes = {
        "mean": abs(mean - pred.mean) <= tol.z_tol * se + tol.finite_size,
        "variance": abs(ratio - 1.0) <= tol.var_tol,
        "ks": p >= tol.p_tol,
    }
    return FitReport(n, mean, var, se, var_se, z, ratio, d, p, passes, all(passes.values()))


@dataclass(frozen=True)
class SecondMomentResult:
    estimate: float
    stderr: float
    reference: float
    ess: float


def second_moment_estimate(prior: PriorSpec, lam: float, N: int, M: int, seed: SeedLike,
                           mode: str = "iid", allow_high: bool = False,
                           chunk: int = 1024) -> SecondMomentResult:
    """Monte Carlo mean of exp(N lam <x, x'>^2 / 2) over M independent spike pairs.

    ``mode="normalized"`` divides by |x|^2 |x'|^2. The integrand is heavy
    tailed near lam = 1, so lam > 0.9 is refused unless ``allow_high``.
    """
    if mode not in ("iid", "normalized"):
        raise DomainError(f"mode must be 'iid' or 'normalized', got {mode!r}")
    if not 0 <= lam < 1:
        raise DomainError(f"lambda = {lam} outside [0, 1)")
    if lam > 0.9 and not allow_high:
        raise DomainError(f"lambda = {lam} > 0.9: estimator variance too large (pass allow_high)")
    reference = (1.0 - lam) ** -0.5
    if lam == 0:
        return SecondMomentResult(1.0, 0.0, reference, float(M))
    rng = make_rng(seed)
    logs = []
    for start in range(0, M, chunk):
        k = min(chunk, M - start)
        if prior.family == "rademacher":
            a = rng.integers(0, 2, size=(k, N), dtype=np.int8)
            b = rng.integers(0, 2, size=(k, N), dtype=np.int8)
            dot = (N - 2 * np.count_nonzero(a != b, axis=1)) / N
            ratio = np.ones(k)
        else:
            x = prior.standard_sample(rng, (k, N)) / math.sqrt(N)
            y = prior.standard_sample(rng, (k, N)) / math.sqrt(N)
            dot = np.einsum("mi,mi->m", x, y)
            ratio = np.ones(k)
            if mode == "normalized":
                nx = np.einsum("mi,mi->m", x, x)
                ny = np.einsum("mi,mi->m", y, y)
                denom = nx * ny
                ratio = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
        logs.append(0.5 * N * lam * dot * dot * ratio)
    e = np.concatenate(logs)
    top = e.max()
    w = np.exp(e - top)
    est = math.exp(top) * w.mean()
    stderr = math.exp(top) * w.std(ddof=1) / math.sqrt(M) if M > 1 else math.nan
    ess = w.sum() ** 2 / np.sum(w * w)
    return SecondMomentResult(float(est), float(stderr), reference, float(ess))


class TrialError(SpinlabError):
    """A trial closure raised; ``trial`` is its index."""

    def __init__(self, trial: int, cause: BaseException):
        super().__init__(f"trial {trial} failed: {type(cause).__name__}: {cause}")
        self.trial = trial
        self.cause = cause


def run_trials(generator: Callable[[int, np.random.SeedSequence], float], trials: int,
               master_seed: SeedLike, parallelism: int = 1) -> np.ndarray:
    """Evaluate ``generator(t, seed_t)`` for t < trials with seed_t keyed by (master, t).

    Results are ordered by trial index regardless of scheduling; the error
    of the lowest failing trial index is raised.
    """

    def one(t):
        try:
            return float(generator(t, derive_seed(master_seed, t))), None
        except Exception as exc:  # noqa: BLE001  re-raised below with the trial index
            return math.nan, exc

    if parallelism <= 1:
        results = [one(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, range(trials)))
    for t, (_, exc) in enumerate(results):
        if exc is not None:
            raise TrialError(t, exc) from exc
    return np.array([v for v, _ in results])


def clt_harness(generator, prediction: GaussianPrediction, trials: int, parallelism: int = 1,
                master_seed: SeedLike = 0, tol: FitTolerances = FitTolerances(),
                metadata: dict | None = None) -> tuple[TrialBatch, FitReport]:
    if trials < MIN_SAMPLES:
        raise StatisticsError(f"need at least {MIN_SAMPLES} trials, got {trials}")
    samples = run_trials(generator, trials, master_seed, parallelism)
    batch = TrialBatch(samples, prediction, dict(metadata or {}))
    return batch, gaussian_fit(batch, tol)
