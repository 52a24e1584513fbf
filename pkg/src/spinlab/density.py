"""Smooth symmetric noise densities and their Fisher-type functionals.

A :class:`DensityModel` is described by its log-density. Ratios ``p^(n)/p``
are built from derivatives of ``log p`` through complete Bell polynomials,
which keeps them finite far in the tails where ``p`` itself underflows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, optimize, special
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DomainError, NumericError

MAX_DERIVATIVE = 5
# effective support ends where p < TAIL_CUT * p(0)
TAIL_CUT = 1e-16


def _logcosh(y):
    y = np.abs(y)
    return y + np.log1p(np.exp(-2.0 * y)) - math.log(2.0)


def _tanh_derivative_polys(kmax: int) -> list[np.ndarray]:
    """Coefficients of T_j with d^j/du^j tanh(u) = T_j(tanh u), j < kmax."""
    polys = [np.array([0.0, 1.0])]
    one_minus_t2 = np.array([1.0, 0.0, -1.0])
    for _ in range(kmax - 1):
        polys.append(npoly.polymul(one_minus_t2, npoly.polyder(polys[-1])))
    return polys


_TANH_POLYS = _tanh_derivative_polys(MAX_DERIVATIVE + 1)


def richardson_derivative(f: Callable, x, order: int, levels: int = 10, shrink: float = 1.6):
    """Central-difference derivative of ``f`` with Ridders-style Richardson extrapolation.

    The base step is ``eps**(1/(order+2)) * (1+|x|)``. The tableau starts at
    ``shrink**(levels-1)`` base steps and shrinks by ``shrink`` per row; each
    point keeps the extrapolant whose error estimate is smallest, so steps too
    coarse for the local curvature and steps lost to rounding are both skipped.
    """
    x = np.asarray(x, dtype=float)
    h = np.finfo(float).eps ** (1.0 / (order + 2)) * (1.0 + np.abs(x))
    h = h * shrink ** (levels - 1)
    coeffs = [(-1) ** k * math.comb(order, k) for k in range(order + 1)]

    def central(h):
        acc = np.zeros_like(x)
        for k, c in enumerate(coeffs):
            acc = acc + c * f(x + (order / 2.0 - k) * h)
        return acc / h**order

    prev = [central(h)]
    best = prev[0]
    err = np.full_like(x, np.inf)
    for _ in range(1, levels):
        h = h / shrink
        row = [central(h)]
        fac = shrink**2
        for j in range(1, len(prev) + 1):
            row.append((fac * row[j - 1] - prev[j - 1]) / (fac - 1.0))
            fac *= shrink**2
            e = np.maximum(np.abs(row[j] - row[j - 1]), np.abs(row[j] - prev[j - 1]))
            better = e <= err
            best = np.where(better, row[j], best)
            err = np.where(better, e, err)
        prev = row
    return best


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Smooth, positive, symmetric density on the real line.

    ``logderiv(x, k)`` returns the k-th derivative of ``log p``; when it is
    ``None`` derivatives come from :func:`richardson_derivative`.
    """

    name: str
    logpdf_fn: Callable[[np.ndarray], np.ndarray]
    logderiv: Callable[[np.ndarray, int], np.ndarray] | None = None
    tail: str = "gaussian"

    def logpdf(self, x):
        return self.logpdf_fn(np.asarray(x, dtype=float))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def log_derivative(self, x, k: int):
        if not 1 <= k <= MAX_DERIVATIVE:
            raise DomainError(f"derivative order {k} outside 1..{MAX_DERIVATIVE}")
        x = np.asarray(x, dtype=float)
        if self.logderiv is not None:
            return self.logderiv(x, k)
        return richardson_derivative(self.logpdf, x, k)

    def ratio(self, x, n: int):
        """``p^(n)(x) / p(x)`` via the complete Bell polynomial of log-derivatives."""
        x = np.asarray(x, dtype=float)
        if n == 0:
            return np.ones_like(x)
        ell = [None] + [self.log_derivative(x, k) for k in range(1, n + 1)]
        bell = [np.ones_like(x)]
        for m in range(n):
            acc = np.zeros_like(x)
            for k in range(m + 1):
                acc = acc + math.comb(m, k) * bell[m - k] * ell[k + 1]
            bell.append(acc)
        return bell[n]

    def derivative(self, x, n: int, method: str = "auto"):
        """n-th derivative of p. ``method="numeric"`` differentiates p directly."""
        if method == "numeric" or (method == "auto" and self.logderiv is None):
            return richardson_derivative(self.pdf, x, n)
        return self.ratio(x, n) * self.pdf(x)

    def scaled(self, variance: float, name: str | None = None) -> "DensityModel":
        """Density of ``sqrt(variance) * Z`` for Z with this density."""
        if variance <= 0:
            raise ConfigError("scaled density needs positive variance")
        sigma = math.sqrt(variance)
        base = self

        def logpdf(x):
            return base.logpdf(x / sigma) - math.log(sigma)

        logderiv = None
        if base.logderiv is not None:
            def logderiv(x, k):
                return base.logderiv(x / sigma, k) / sigma**k

        return DensityModel(name or f"{self.name}*{variance:g}", logpdf, logderiv, self.tail)

    def support_radius(self) -> float:
        """Smallest R > 0 with p(R) = TAIL_CUT * p(0)."""
        target = self.logpdf(0.0) + math.log(TAIL_CUT)
        hi = 1.0
        while self.logpdf(hi) > target:
            hi *= 2.0
            if hi > 1e6:
                raise NumericError(f"density {self.name!r} does not decay (p(1e6) above cut)")
        return optimize.brentq(lambda r: float(self.logpdf(r) - target), 0.0, hi, xtol=1e-12)

    def moment(self, k: int) -> float:
        if k % 2:
            return 0.0
        return 2.0 * integrate_even(lambda x: x**k * self.pdf(x), self)

    def validate(self) -> None:
        """Check normalization, symmetry and positivity; raise ConfigError otherwise."""
        grid = np.linspace(-8.0, 8.0, 321)
        lp, lm = self.logpdf(grid), self.logpdf(-grid)
        if not np.all(np.isfinite(lp)):
            raise ConfigError(f"density {self.name!r} is not positive on [-8, 8]")
        p = np.exp(lp)
        if np.max(np.abs(p - np.exp(lm))) > 1e-12 * max(1.0, p.max()):
            raise ConfigError(f"density {self.name!r} is not symmetric")
        mass = 2.0 * integrate_even(self.pdf, self)
        if abs(mass - 1.0) > 1e-9:
            raise ConfigError(f"density {self.name!r} integrates to {mass!r}, not 1")


def integrate_even(f: Callable, p: DensityModel, tol: float = 1e-11) -> float:
    """Integral of ``f`` over [0, R] where R is the effective support of ``p``.

    Callers double the result for even integrands. The interval is split at
    mass-based breakpoints so the adaptive rule sees the bulk and the tail.
    """
    R = p.support_radius()
    points = sorted({min(R * 0.999, v) for v in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0) if v < R})
    out = integrate.quad(
        f, 0.0, R, epsabs=tol, epsrel=1e-13, limit=500, points=points or None, full_output=1
    )
    if len(out) > 3:
        raise NumericError(f"quadrature for {p.name!r} did not converge: {out[3]}")
    return float(out[0])


@dataclass(frozen=True)
class FisherSet:
    F_p: float
    F_d: float
    G_p: float


def fisher_information(p: DensityModel, tol: float = 1e-11) -> float:
    """Fisher information of the location family of ``p``: integral of (p')^2/p."""
    return 2.0 * integrate_even(lambda x: p.log_derivative(x, 1) ** 2 * p.pdf(x), p, tol)


def second_fisher(p: DensityModel, tol: float = 1e-11) -> float:
    """Integral of (p'')^2/p."""
    return 2.0 * integrate_even(lambda x: p.ratio(x, 2) ** 2 * p.pdf(x), p, tol)


def ratio_second_moment(p: DensityModel, n: int, tol: float = 1e-11) -> float:
    """E[(p^(n)/p)^2] under p, i.e. the integral of (p^(n))^2/p."""
    return 2.0 * integrate_even(lambda x: p.ratio(x, n) ** 2 * p.pdf(x), p, tol)


def fisher_set(p: DensityModel, p_d: DensityModel) -> FisherSet:
    return FisherSet(fisher_information(p), fisher_information(p_d), second_fisher(p))


def lr_coefficient(p: DensityModel, n: int, lam: float, w, diagonal: bool = False):
    """Taylor coefficient (-1)^n lam^(n/2) p^(n)(w) / (n! p(w)) of the density ratio."""
    top = 2 if diagonal else 4
    if not 1 <= n <= top:
        raise DomainError(f"coefficient order {n} outside 1..{top}")
    if lam < 0:
        raise DomainError("SNR must be nonnegative")
    w = np.asarray(w, dtype=float)
    if np.any(~np.isfinite(p.logpdf(w))):
        bad = w[~np.isfinite(p.logpdf(w))]
        raise NumericError(f"density {p.name!r} underflows at w={bad.ravel()[0]!r}")
    return (-1) ** n * lam ** (n / 2.0) * p.ratio(w, n) / math.factorial(n)


def log_tail(a: float) -> float:
    """-log(1-a) - a - a^2/2 = sum_{k>=3} a^k/k without cancellation at small a."""
    if abs(a) < 0.25:
        return math.fsum(a**k / k for k in range(3, 64))
    return -math.log1p(-a) - a - a * a / 2.0


class RhoNegativeWarning(RuntimeWarning):
    pass


def rho_L(lam: float, fs: FisherSet) -> float:
    """Variance-half of the limiting log likelihood ratio."""
    a = lam * fs.F_p
    if lam < 0:
        raise DomainError("SNR must be nonnegative")
    if a >= 1.0:
        raise DomainError(f"lambda*F_p = {a:.6g} >= 1 (supercritical)")
    # -(1/4)[log(1-a) + lam(F_p - 2F_d) + (lam^2/4)(2F_p^2 - G_p)], regrouped into nonnegative parts
    rho = 0.25 * log_tail(a) + lam * fs.F_d / 2.0 + lam**2 * fs.G_p / 16.0
    if rho < 0:
        warnings.warn(f"rho_L = {rho!r} < 0 for lambda={lam}, {fs}", RhoNegativeWarning, stacklevel=2)
    return rho


def detection_error(rho: float) -> float:
    """Limiting Type-I + Type-II error of the likelihood ratio test."""
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    return float(special.erfc(math.sqrt(rho) / 2.0))


# --- families -----------------------------------------------------------------


def gaussian_density(variance: float = 1.0) -> DensityModel:
    v = float(variance)
    c = -0.5 * math.log(2.0 * math.pi * v)

    def logpdf(x):
        return c - x * x / (2.0 * v)

    def logderiv(x, k):
        if k == 1:
            return -x / v
        if k == 2:
            return np.full_like(x, -1.0 / v)
        return np.zeros_like(x)

    name = "gaussian" if v == 1.0 else f"gaussian(var={v:g})"
    return DensityModel(name, logpdf, logderiv, "gaussian")


def logcosh_density(name: str, a: float, r: float) -> DensityModel:
    """p(x) proportional to cosh(a x)^(-r); logistic is r=2, hyperbolic secant r=1."""
    log_norm = math.log(a) - special.betaln(r / 2.0, 0.5)

    def logpdf(x):
        return log_norm - r * _logcosh(a * x)

    def logderiv(x, k):
        t = np.tanh(a * x)
        return -r * a**k * npoly.polyval(t, _TANH_POLYS[k - 1])

    return DensityModel(name, logpdf, logderiv, "exponential")


def logistic_density() -> DensityModel:
    """Unit-variance logistic density."""
    s = math.sqrt(3.0) / math.pi
    return logcosh_density("logistic", 1.0 / (2.0 * s), 2.0)


def sech_density() -> DensityModel:
    """Unit-variance hyperbolic secant density, 0.5*sech(pi x/2)."""
    return logcosh_density("sech", math.pi / 2.0, 1.0)


def from_logpdf(name: str, logpdf: Callable) -> DensityModel:
    """Custom density given by a vectorized log-density; derivatives are numeric."""
    return DensityModel(name, logpdf, None, "unknown")


def tabulated_density(x, logp, name: str = "tabulated") -> DensityModel:
    """Cubic-spline log-density through (x, log p); linear log tails outside the grid."""
    x = np.asarray(x, dtype=float)
    logp = np.asarray(logp, dtype=float)
    if x.ndim != 1 or x.shape != logp.shape or x.size < 4:
        raise ConfigError("tabulated density needs matching 1-d x and log p with >= 4 points")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("tabulated density grid must be strictly increasing")
    if abs(x[0] + x[-1]) > 1e-9 * max(1.0, abs(x[-1])):
        raise ConfigError("tabulated density grid must be symmetric about 0")
    spline = CubicSpline(x, logp)
    lo, hi = x[0], x[-1]
    slope_hi = float(spline(hi, 1))
    slope_lo = float(spline(lo, 1))

    def logpdf(t):
        t = np.asarray(t, dtype=float)
        inside = spline(np.clip(t, lo, hi))
        return np.where(t > hi, spline(hi) + slope_hi * (t - hi),
                        np.where(t < lo, spline(lo) + slope_lo * (t - lo), inside))

    def logderiv(t, k):
        t = np.asarray(t, dtype=float)
        if k > 3:
            return np.zeros_like(t)
        inside = spline(np.clip(t, lo, hi), k)
        if k == 1:
            return np.where(t > hi, slope_hi, np.where(t < lo, slope_lo, inside))
        return np.where((t > hi) | (t < lo), 0.0, inside)

    return DensityModel(name, logpdf, logderiv, "exponential")


def read_density_table(path, name: str | None = None) -> DensityModel:
    """Load a CSV with columns ``x,logp`` (header optional)."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2,
                      skiprows=_header_rows(path))
    return tabulated_density(data[:, 0], data[:, 1], name or str(path))


def _header_rows(path) -> int:
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            try:
                [float(v) for v in line.split(",")]
                return 0
            except ValueError:
                return 1
    return 0


DENSITIES: dict[str, Callable[[], DensityModel]] = {
    "gaussian": gaussian_density,
    "logistic": logistic_density,
    "sech": sech_density,
}


def get_density(name: str) -> DensityModel:
    try:
        return DENSITIES[name]()
    except KeyError:
        raise ConfigError(f"unknown density {name!r}; known: {sorted(DENSITIES)}") from None
