"""Log likelihood ratios for the spiked Wigner model M = W + sqrt(lambda) x x^T."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .density import DensityModel, FisherSet, fisher_set, lr_coefficient, rho_L
from .ensembles import DisorderSpec, PriorSpec, SeedLike, derive_seed, make_rng, sample_spike, sample_wigner
from .errors import ConfigError, NumericError
from .free_energy import GaussianPrediction, _check_matrix, log_mean_exp, sample_spikes
from .kernels import DEFAULT_SPIN_CAP, gray_code_logz

MC_ELEMENTS = 1 << 21


class SupercriticalWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Densities of sqrt(N) W_ij off the diagonal (``p``) and on it (``p_d``)."""

    p: DensityModel
    p_d: DensityModel

    @classmethod
    def from_disorder(cls, spec: DisorderSpec) -> "NoiseModel":
        return cls(*spec.noise_pair())

    @cached_property
    def fisher(self) -> FisherSet:
        return fisher_set(self.p, self.p_d)


@dataclass(frozen=True)
class LogLRSample:
    lam: float
    N: int
    hypothesis: str
    logL: float
    prior_mode: str
    method: str
    stderr: float | None = None


def _finite_or_raise(logp: np.ndarray, w: np.ndarray, pairs, density: DensityModel):
    bad = ~np.isfinite(logp)
    if bad.any():
        k = int(np.flatnonzero(bad.ravel())[0])
        i, j = pairs[0].ravel()[k % pairs[0].size], pairs[1].ravel()[k % pairs[1].size]
        raise NumericError(
            f"density {density.name!r} underflows at (i, j) = ({i}, {j}), w = {w.ravel()[k % w.size]!r}"
        )


def _exact_log_lr(W: np.ndarray, lam: float, noise: NoiseModel, cap: int) -> float:
    """Exact spike average for the Rademacher prior.

    With x = sigma/sqrt(N) each pair shifts by a sigma_i sigma_j, a = sqrt(lam/N).
    The pair log ratio g(s) splits into an even part, summed directly, and an
    odd part that becomes an Ising coupling averaged by Gray-code enumeration.
    """
    N = W.shape[0]
    rootN = math.sqrt(N)
    a = math.sqrt(lam / N)
    iu = np.triu_indices(N, 1)
    w = rootN * W[iu]
    base = noise.p.logpdf(w)
    plus = noise.p.logpdf(w - a)
    minus = noise.p.logpdf(w + a)
    for arr in (base, plus, minus):
        _finite_or_raise(arr, w, iu, noise.p)
    gp, gm = plus - base, minus - base
    even = 0.5 * (gp + gm)
    J = np.zeros((N, N))
    J[iu] = 0.5 * (gp - gm)
    J = J + J.T
    wd = rootN * np.diag(W)
    dd = (np.arange(N), np.arange(N))
    bd, sd = noise.p_d.logpdf(wd), noise.p_d.logpdf(wd - a)
    for arr in (bd, sd):
        _finite_or_raise(arr, wd, dd, noise.p_d)
    return float(even.sum() + (sd - bd).sum() + gray_code_logz(J, 1.0, cap=cap))


def spike_log_ratio(W, lam: float, X: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """log prod of density ratios p(w - sqrt(lam N) x_i x_j)/p(w) for each spike row of X."""
    W = np.asarray(W, dtype=float)
    X = np.atleast_2d(X)
    N = W.shape[0]
    rootN = math.sqrt(N)
    iu = np.triu_indices(N, 1)
    w = rootN * W[iu]
    wd = rootN * np.diag(W)
    base = noise.p.logpdf(w).sum() + noise.p_d.logpdf(wd).sum()
    shift = math.sqrt(lam * N)
    off = noise.p.logpdf(w[None, :] - shift * X[:, iu[0]] * X[:, iu[1]])
    diag = noise.p_d.logpdf(wd[None, :] - shift * X * X)
    if not (np.all(np.isfinite(off)) and np.all(np.isfinite(diag))):
        _finite_or_raise(off, np.broadcast_to(w, off.shape), iu, noise.p)
        _finite_or_raise(diag, np.broadcast_to(wd, diag.shape), (np.arange(N), np.arange(N)), noise.p_d)
    return off.sum(axis=1) + diag.sum(axis=1) - base


def log_lr(W, lam: float, noise: NoiseModel, prior: PriorSpec, mode: str = "exact", M: int = 0,
           seed: SeedLike = 0, hypothesis: str = "H0", cap: int = DEFAULT_SPIN_CAP) -> LogLRSample:
    """log of the prior average of the per-entry density ratios of W."""
    W = _check_matrix(W)
    N = W.shape[0]
    prior_mode = "normalized" if prior.normalized else "iid"
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    if lam * noise.fisher.F_p >= 1:
        warnings.warn(f"lambda*F_p = {lam * noise.fisher.F_p:.4g} >= 1", SupercriticalWarning, stacklevel=2)
    if mode == "exact":
        if prior.family != "rademacher":
            raise ConfigError("exact log-LR needs the Rademacher prior")
        value = 0.0 if lam == 0 else _exact_log_lr(W, lam, noise, cap)
        return LogLRSample(lam, N, hypothesis, value, prior_mode, "exact")
    if mode != "mc":
        raise ConfigError(f"mode must be 'exact' or 'mc', got {mode!r}")
    if M < 1:
        raise ConfigError("mc mode needs M >= 1")
    if lam == 0:
        return LogLRSample(lam, N, hypothesis, 0.0, prior_mode, "mc", 0.0 if M > 1 else math.nan)
    rng = make_rng(seed)
    chunk = max(1, MC_ELEMENTS // (N * N))
    parts = []
    for start in range(0, M, chunk):
        X = sample_spikes(prior, N, min(chunk, M - start), rng)
        parts.append(spike_log_ratio(W, lam, X, noise))
    est = log_mean_exp(np.concatenate(parts))
    return LogLRSample(lam, N, hypothesis, est.logZ, prior_mode, "mc", est.stderr)


def sample_data_matrix(lam: float, disorder: DisorderSpec, prior: PriorSpec, N: int, seed: SeedLike,
                       hypothesis: str = "H0") -> np.ndarray:
    """W under H0, W + sqrt(lam) x x^T under H1.

    W comes from the child stream ``(seed, 0)`` and x from ``(seed, 1)``, so
    both hypotheses share the same noise for a given seed.
    """
    if hypothesis not in ("H0", "H1"):
        raise ConfigError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    W = sample_wigner(disorder, N, derive_seed(seed, 0))
    if hypothesis == "H0" or lam == 0:
        return W
    x = sample_spike(prior, N, derive_seed(seed, 1))
    return W + math.sqrt(lam) * np.outer(x, x)


def truncated_expansion_lr(W, lam: float, x, noise: NoiseModel) -> float:
    """Per-spike density ratio with each factor replaced by its 4th (2nd on the diagonal) order Taylor polynomial."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    N = W.shape[0]
    rootN = math.sqrt(N)
    if lam == 0:
        return 1.0
    iu = np.triu_indices(N, 1)
    w = rootN * W[iu]
    u = rootN * x[iu[0]] * x[iu[1]]
    off = np.ones_like(w)
    for n in range(1, 5):
        off = off + lr_coefficient(noise.p, n, lam, w) * u**n
    wd = rootN * np.diag(W)
    ud = rootN * x * x
    diag = np.ones_like(wd)
    for n in range(1, 3):
        diag = diag + lr_coefficient(noise.p_d, n, lam, wd, diagonal=True) * ud**n
    factors = np.concatenate([off, diag])
    sign = np.prod(np.sign(factors))
    if sign == 0:
        return 0.0
    return float(sign * math.exp(np.log(np.abs(factors)).sum()))


def predict_loglr(lam: float, fs: FisherSet) -> dict[str, GaussianPrediction]:
    """Limiting laws N(-rho_L, 2 rho_L) under H0 and N(rho_L, 2 rho_L) under H1."""
    rho = rho_L(lam, fs)
    return {"H0": GaussianPrediction(-rho, 2.0 * rho), "H1": GaussianPrediction(rho, 2.0 * rho)}
