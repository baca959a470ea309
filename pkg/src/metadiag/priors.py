"""Priors for the between-study variances and correlation.

Correlation priors are penalised-complexity (PC) priors built on the
Kullback-Leibler distance between bivariate normals with correlation ``rho``
and a base correlation ``rho0``, plus the normal prior on the Fisher-z scale
``z = logit((rho + 1) / 2)`` used for comparison. Variance priors are the PC
prior (exponential on the standard deviation) and the inverse gamma.

Every hyperprior exposes ``log_density_internal`` on the unconstrained scale
used by the inference code: ``log(variance)`` for variances, ``z`` for the
correlation. Jacobians are included.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, optimize, special, stats

__all__ = [
    "PriorSpecError",
    "CorrelationPCPrior",
    "VariancePCPrior",
    "NormalZPrior",
    "InverseGammaPrior",
    "FixedCorrelation",
    "ComparisonPrior",
    "kld_correlation",
    "distance_correlation",
    "distance_derivative",
    "solve_rates",
    "pc_cor_density",
    "pc_cor_sample",
    "variance_pc_rate",
    "variance_pc_density",
    "comparison_prior_density",
    "parse_prior",
    "preset",
    "rho_to_z",
    "z_to_rho",
]

# Below this |rho - rho0| the Jacobian of the distance is evaluated by its series.
_SERIES_RADIUS = 1e-6


class PriorSpecError(ValueError):
    """Invalid prior parameters or an unparsable prior specification."""


# ---------------------------------------------------------------------------
# correlation scale helpers


def rho_to_z(rho):
    """Fisher-z style transform ``logit((rho + 1) / 2)``, i.e. ``2 atanh(rho)``."""
    return 2.0 * np.arctanh(rho)


def z_to_rho(z):
    return np.tanh(np.asarray(z, dtype=float) / 2.0)


def _log1m_rho2_from_z(z):
    # log(1 - tanh(z/2)^2) = -2 log cosh(z/2), evaluated without overflow
    a = np.abs(np.asarray(z, dtype=float)) / 2.0
    return -2.0 * (a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0))


def _check_open_interval(rho, name="rho"):
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(np.abs(rho) >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (-1, 1)")
    return rho


def _x_minus_log1p(x):
    shape = np.shape(x)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = xs**2 / 2 - xs**3 / 3 + xs**4 / 4 - xs**5 / 5 + xs**6 / 6 - xs**7 / 7
    xl = x[~small]
    with np.errstate(divide="ignore"):
        out[~small] = xl - np.log1p(xl)
    return out.reshape(shape)


def _kld(rho, rho0, log1m_rho2=None):
    # 0.5 (rho0 - rho)^2 / (1 - rho0^2) + 0.5 (x - log1p x),
    # x = (1 - rho^2) / (1 - rho0^2) - 1.  Both terms are nonnegative.
    shape = np.shape(rho)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    c0 = 1.0 - rho0 * rho0
    x = (rho0 - rho) * (rho0 + rho) / c0
    out = 0.5 * (rho0 - rho) ** 2 / c0 + 0.5 * _x_minus_log1p(x)
    if log1m_rho2 is not None:
        # near the boundary 1 - rho^2 underflows; use the log supplied by the caller
        far = x < -0.5
        if np.any(far):
            lg = np.broadcast_to(np.atleast_1d(np.asarray(log1m_rho2, dtype=float)), out.shape)[far]
            xf = x[far]
            out[far] = 0.5 * (rho0 - rho[far]) ** 2 / c0 + 0.5 * (xf - (lg - math.log(c0)))
    return out.reshape(shape)


def kld_correlation(rho, rho0):
    """KL divergence from N(0, R(rho0)) to N(0, R(rho)) for unit-variance bivariate normals.

    Computed in a cancellation-free form so the result is nonnegative and
    exactly zero at ``rho == rho0``. Accepts arrays for `rho`.
    """
    _check_open_interval(rho0, "rho0")
    rho = _check_open_interval(rho)
    out = _kld(rho, float(rho0))
    return float(out) if out.ndim == 0 else out


def distance_correlation(rho, rho0):
    """Distance ``sqrt(2 KLD)`` between the flexible and the base correlation model."""
    out = np.sqrt(2.0 * np.asarray(kld_correlation(rho, rho0)))
    return float(out) if out.ndim == 0 else out


def _abs_dd_series(h, rho0):
    # |d d / d rho| at rho0 + h, first order in h
    c0 = 1.0 - rho0 * rho0
    a = (1.0 + rho0 * rho0) / c0**2
    b = (6.0 * rho0 + 2.0 * rho0**3) / c0**3
    return math.sqrt(a) * (1.0 + b * h / (3.0 * a))


def distance_derivative(rho, rho0):
    """Absolute derivative ``|d d(rho) / d rho|``; finite and positive at ``rho0``."""
    rho = _check_open_interval(rho)
    shape = rho.shape
    rho = np.atleast_1d(rho)
    rho0 = float(rho0)
    h = rho - rho0
    near = np.abs(h) < _SERIES_RADIUS
    out = np.empty_like(rho)
    out[near] = _abs_dd_series(h[near], rho0)
    rf = rho[~near]
    d = np.sqrt(2.0 * _kld(rf, rho0))
    out[~near] = np.abs(rf / ((1 - rf) * (1 + rf)) - rho0 / (1 - rho0 * rho0)) / d
    return float(out[0]) if shape == () else out.reshape(shape)


# ---------------------------------------------------------------------------
# PC prior for the correlation


def solve_rates(strategy: int, rho0: float, omega1=None, umin=None, alpha1=None,
                umax=None, alpha2=None) -> tuple[float, float, float]:
    """Solve for ``(lambda1, lambda2, omega1)`` from the user's probability contrasts.

    Strategy 1 uses ``P(rho <= umin) = alpha1`` and ``P(rho <= rho0) = omega1``;
    strategy 2 uses ``P(rho > umax) = alpha2`` and ``omega1``; strategy 3 uses both
    tail contrasts and solves for ``omega1``. In every case
    ``omega1 * lambda1 == (1 - omega1) * lambda2`` so the density is continuous
    at ``rho0``.
    """
    if not -1.0 < rho0 < 1.0:
        raise PriorSpecError(f"rho0={rho0} must lie in (-1, 1)")

    def check_left():
        if umin is None or alpha1 is None:
            raise PriorSpecError(f"strategy {strategy} requires umin and alpha1")
        if not -1.0 < umin < rho0:
            raise PriorSpecError(f"umin={umin} must satisfy -1 < umin < rho0={rho0}")

    def check_right():
        if umax is None or alpha2 is None:
            raise PriorSpecError(f"strategy {strategy} requires umax and alpha2")
        if not rho0 < umax < 1.0:
            raise PriorSpecError(f"umax={umax} must satisfy rho0={rho0} < umax < 1")

    if strategy in (1, 2):
        if omega1 is None or not 0.0 < omega1 < 1.0:
            raise PriorSpecError(f"strategy {strategy} requires omega1 in (0, 1), got {omega1}")
    if strategy == 1:
        check_left()
        if not 0.0 < alpha1 < omega1:
            raise PriorSpecError(f"alpha1={alpha1} must satisfy 0 < alpha1 < omega1={omega1}")
        lam1 = (math.log(omega1) - math.log(alpha1)) / distance_correlation(umin, rho0)
        lam2 = omega1 * lam1 / (1.0 - omega1)
        return lam1, lam2, omega1
    if strategy == 2:
        check_right()
        if not 0.0 < alpha2 < 1.0 - omega1:
            raise PriorSpecError(f"alpha2={alpha2} must satisfy 0 < alpha2 < 1 - omega1={1 - omega1}")
        lam2 = (math.log(1.0 - omega1) - math.log(alpha2)) / distance_correlation(umax, rho0)
        lam1 = (1.0 - omega1) * lam2 / omega1
        return lam1, lam2, omega1
    if strategy == 3:
        check_left()
        check_right()
        if not (alpha1 > 0 and alpha2 > 0 and alpha1 + alpha2 < 1):
            raise PriorSpecError(f"alpha1={alpha1}, alpha2={alpha2} must be positive with alpha1 + alpha2 < 1")
        d1 = distance_correlation(umin, rho0)
        d2 = distance_correlation(umax, rho0)

        def residual(w):
            return w * math.log(w / alpha1) / d1 - (1 - w) * math.log((1 - w) / alpha2) / d2

        lo, hi = alpha1, 1.0 - alpha2
        r_lo, r_hi = residual(lo), residual(hi)
        if not r_lo < 0 < r_hi:
            raise PriorSpecError(
                f"strategy 3 root not bracketed: residual({lo})={r_lo:.3g}, residual({hi})={r_hi:.3g}")
        w = optimize.brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        lam1 = math.log(w / alpha1) / d1
        lam2 = math.log((1 - w) / alpha2) / d2
        return lam1, lam2, w
    raise PriorSpecError(f"unknown strategy {strategy!r}; expected 1, 2 or 3")


@dataclass(frozen=True)
class CorrelationPCPrior:
    """Two-rate PC prior for a correlation, centred at the base value `rho0`."""

    rho0: float
    lambda1: float
    lambda2: float
    omega1: float
    strategy: int = 1
    inputs: dict = field(default_factory=dict, compare=False)

    kind = "pc-cor"

    @classmethod
    def from_contrasts(cls, strategy: int, rho0: float, **contrasts) -> "CorrelationPCPrior":
        lam1, lam2, w1 = solve_rates(strategy, rho0, **contrasts)
        inputs = {k: v for k, v in contrasts.items() if v is not None}
        return cls(rho0=rho0, lambda1=lam1, lambda2=lam2, omega1=w1, strategy=strategy, inputs=inputs)

    @property
    def omega2(self) -> float:
        return 1.0 - self.omega1

    def pdf(self, rho):
        return pc_cor_density(rho, self)

    def logpdf(self, rho):
        rho = _check_open_interval(rho)
        left = rho <= self.rho0
        d = np.sqrt(2.0 * _kld(rho, self.rho0))
        logw = np.where(left, math.log(self.omega1 * self.lambda1), math.log(self.omega2 * self.lambda2))
        lam = np.where(left, self.lambda1, self.lambda2)
        out = logw - lam * d + np.log(distance_derivative(rho, self.rho0))
        return float(out) if out.ndim == 0 else out

    def cdf(self, rho):
        rho = _check_open_interval(rho)
        d = np.sqrt(2.0 * _kld(rho, self.rho0))
        out = np.where(rho <= self.rho0,
                       self.omega1 * np.exp(-self.lambda1 * d),
                       1.0 - self.omega2 * np.exp(-self.lambda2 * d))
        return float(out) if out.ndim == 0 else out

    def log_density_internal(self, z):
        """Log density of ``z = logit((rho + 1) / 2)``."""
        if isinstance(z, (float, int, np.floating)):
            return self._log_density_internal_scalar(float(z))
        z = np.asarray(z, dtype=float)
        rho = z_to_rho(z)
        lg = _log1m_rho2_from_z(z)
        rho0 = self.rho0
        c0 = 1.0 - rho0 * rho0
        h = rho - rho0
        d = np.sqrt(2.0 * _kld(rho, rho0, lg))
        left = z <= rho_to_z(rho0)
        near = np.abs(h) < _SERIES_RADIUS
        # |dd/drho| * drho/dz = |rho - rho0 (1 - rho^2) / c0| / (2 d)
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.abs(rho - rho0 * np.exp(lg) / c0)
            log_jac = np.log(num) - math.log(2.0) - np.log(d)
        if np.any(near):
            log_jac = np.where(near, np.log(_abs_dd_series(h, rho0)) + lg - math.log(2.0), log_jac)
        logw = np.where(left, math.log(self.omega1 * self.lambda1), math.log(self.omega2 * self.lambda2))
        lam = np.where(left, self.lambda1, self.lambda2)
        out = logw - lam * d + log_jac
        return float(out) if out.ndim == 0 else out

    def _log_density_internal_scalar(self, z: float) -> float:
        # scalar mirror of the array path; called once per Laplace fit
        rho = math.tanh(z / 2.0)
        a = abs(z) / 2.0
        lg = -2.0 * (a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0))
        rho0 = self.rho0
        c0 = 1.0 - rho0 * rho0
        h = rho - rho0
        x = (rho0 - rho) * (rho0 + rho) / c0
        if x < -0.5:
            xm = x - (lg - math.log(c0))
        elif abs(x) < 1e-3:
            xm = x**2 / 2 - x**3 / 3 + x**4 / 4 - x**5 / 5 + x**6 / 6 - x**7 / 7
        else:
            xm = x - math.log1p(x)
        d = math.sqrt(max(2.0 * (0.5 * h * h / c0 + 0.5 * xm), 0.0))
        if abs(h) < _SERIES_RADIUS:
            log_jac = math.log(_abs_dd_series(h, rho0)) + lg - math.log(2.0)
        else:
            log_jac = math.log(abs(rho - rho0 * math.exp(lg) / c0)) - math.log(2.0) - math.log(d)
        if z <= 2.0 * math.atanh(rho0):
            return math.log(self.omega1 * self.lambda1) - self.lambda1 * d + log_jac
        return math.log(self.omega2 * self.lambda2) - self.lambda2 * d + log_jac

    def sample(self, rng: np.random.Generator, size=None):
        return pc_cor_sample(self, rng, size)

    def ppf(self, q):
        """Quantile function, via the closed-form CDF and monotone inversion."""
        q = np.asarray(q, dtype=float)
        left = q <= self.omega1
        with np.errstate(divide="ignore"):
            d = np.where(left,
                         -np.log(np.clip(q / self.omega1, 1e-300, 1.0)) / self.lambda1,
                         -np.log(np.clip((1.0 - q) / self.omega2, 1e-300, 1.0)) / self.lambda2)
        out = _invert_distance(d, left, self.rho0)
        return float(out) if out.ndim == 0 else out

    def spec_string(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.inputs.items())
        return f"pc-cor(strategy={self.strategy}, rho0={self.rho0:g}, {args})"


def pc_cor_density(rho, prior: CorrelationPCPrior):
    """Density of the two-rate PC correlation prior on the correlation scale."""
    out = np.exp(np.asarray(prior.logpdf(rho)))
    return float(out) if out.ndim == 0 else out


def _invert_distance(d, left, rho0, iterations: int = 200):
    """Find rho on the requested side of rho0 with distance(rho) == d (vectorised bisection in z)."""
    d = np.asarray(d, dtype=float)
    left = np.broadcast_to(np.asarray(left, dtype=bool), d.shape)
    z0 = rho_to_z(rho0)
    # d(z)^2 grows like |z| for large |z|, so this bracket always contains the root
    span = 2.0 * d**2 + 8.0 * d + 4.0
    lo = np.where(left, z0 - span, z0)
    hi = np.where(left, z0, z0 + span)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        dm = np.sqrt(2.0 * _kld(z_to_rho(mid), rho0, _log1m_rho2_from_z(mid)))
        # distance decreases in z on the left side and increases on the right
        go_right = np.where(left, dm > d, dm < d)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    rho = z_to_rho(0.5 * (lo + hi))
    edge = np.nextafter(1.0, 0.0)
    return np.clip(rho, -edge, edge)


def pc_cor_sample(prior: CorrelationPCPrior, rng: np.random.Generator, size=None):
    """Inverse-CDF draws: pick a side with probability (omega1, omega2), draw an
    exponential distance with that side's rate, map it back to rho."""
    shape = () if size is None else size
    left = rng.random(shape) < prior.omega1
    e = rng.standard_exponential(shape)
    d = np.where(left, e / prior.lambda1, e / prior.lambda2)
    rho = _invert_distance(np.asarray(d), np.asarray(left), prior.rho0)
    return float(rho) if size is None else rho


# ---------------------------------------------------------------------------
# variance priors


def variance_pc_rate(u: float, a: float) -> float:
    """Rate of the exponential prior on the standard deviation with ``P(sigma > u) = a``."""
    if not u > 0:
        raise PriorSpecError(f"u={u} must be positive")
    if not 0.0 < a < 1.0:
        raise PriorSpecError(f"a={a} must lie in (0, 1)")
    return -math.log(a) / u


def variance_pc_density(v, lam: float):
    """Density of ``V = sigma^2`` when ``sigma ~ Exponential(lam)``."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("variance must be positive")
    s = np.sqrt(v)
    out = lam / (2.0 * s) * np.exp(-lam * s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class VariancePCPrior:
    u: float
    a: float
    lam: float

    kind = "pc-var"

    @classmethod
    def from_contrast(cls, u: float, a: float) -> "VariancePCPrior":
        return cls(u=u, a=a, lam=variance_pc_rate(u, a))

    def pdf(self, v):
        return variance_pc_density(v, self.lam)

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        s = np.sqrt(v)
        out = math.log(self.lam / 2.0) - np.log(s) - self.lam * s
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        out = -np.expm1(-self.lam * np.sqrt(np.asarray(v, dtype=float)))
        return float(out) if out.ndim == 0 else out

    def ppf(self, q):
        out = (-np.log1p(-np.asarray(q, dtype=float)) / self.lam) ** 2
        return float(out) if out.ndim == 0 else out

    def log_density_internal(self, t):
        """Log density of ``t = log(variance)``."""
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            out = math.log(self.lam / 2.0) - self.lam * np.exp(t / 2.0) + t / 2.0
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.lam, size) ** 2

    def spec_string(self) -> str:
        return f"pc-var(u={self.u:g}, a={self.a:g})"


@dataclass(frozen=True)
class InverseGammaPrior:
    shape: float
    rate: float

    kind = "invgamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise PriorSpecError("inverse gamma shape and rate must be positive")

    def pdf(self, v):
        return comparison_prior_density(v, self)

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        a, b = self.shape, self.rate
        with np.errstate(divide="ignore"):
            out = a * math.log(b) - special.gammaln(a) - (a + 1) * np.log(v) - b / v
        return float(out) if out.ndim == 0 else out

    def cdf(self, v):
        out = special.gammaincc(self.shape, self.rate / np.asarray(v, dtype=float))
        return float(out) if out.ndim == 0 else out

    def ppf(self, q):
        out = self.rate / special.gammainccinv(self.shape, np.asarray(q, dtype=float))
        return float(out) if out.ndim == 0 else out

    def log_density_internal(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.shape, self.rate
        with np.errstate(over="ignore"):
            out = a * math.log(b) - special.gammaln(a) - a * t - b * np.exp(-t)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        return self.rate / rng.gamma(self.shape, 1.0, size)

    def spec_string(self) -> str:
        return f"invgamma(shape={self.shape:g}, rate={self.rate:g})"


# ---------------------------------------------------------------------------
# other correlation priors


@dataclass(frozen=True)
class NormalZPrior:
    """Normal prior on ``z = logit((rho + 1) / 2)``."""

    mean: float
    var: float

    kind = "normal-z"

    def __post_init__(self):
        if not self.var > 0:
            raise PriorSpecError("normal-z variance must be positive")

    def pdf(self, rho):
        return comparison_prior_density(rho, self)

    def logpdf(self, rho):
        rho = _check_open_interval(rho)
        z = rho_to_z(rho)
        out = stats.norm.logpdf(z, self.mean, math.sqrt(self.var)) + math.log(2.0) - np.log((1 - rho) * (1 + rho))
        return float(out) if out.ndim == 0 else out

    def cdf(self, rho):
        out = stats.norm.cdf(rho_to_z(_check_open_interval(rho)), self.mean, math.sqrt(self.var))
        return float(out) if out.ndim == 0 else out

    def ppf(self, q):
        out = z_to_rho(stats.norm.ppf(q, self.mean, math.sqrt(self.var)))
        return float(out) if np.ndim(out) == 0 else out

    def log_density_internal(self, z):
        out = stats.norm.logpdf(np.asarray(z, dtype=float), self.mean, math.sqrt(self.var))
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        return z_to_rho(rng.normal(self.mean, math.sqrt(self.var), size))

    def spec_string(self) -> str:
        return f"normal-z(mean={self.mean:g}, var={self.var:g})"


@dataclass(frozen=True)
class FixedCorrelation:
    """Correlation pinned to a constant; removes it from the hyperparameters."""

    rho: float

    kind = "fixed"

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise PriorSpecError(f"fixed rho={self.rho} must lie in (-1, 1)")

    def spec_string(self) -> str:
        return f"fixed(rho={self.rho:g})"


ComparisonPrior = Union[NormalZPrior, InverseGammaPrior]


def comparison_prior_density(x, prior: ComparisonPrior):
    """Density of a comparison prior: correlation scale for ``normal-z``
    (with Jacobian ``2 / (1 - rho^2)``), variance scale for ``invgamma``."""
    if isinstance(prior, NormalZPrior):
        out = np.exp(prior.logpdf(x))
    elif isinstance(prior, InverseGammaPrior):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("variance must be positive")
        out = np.exp(prior.logpdf(x))
    else:
        raise TypeError(f"not a comparison prior: {prior!r}")
    return float(out) if np.ndim(out) == 0 else out


def _z_mass(prior, lo: float, hi: float) -> float:
    """Integral of the internal density over ``[lo, hi]`` on the z scale."""
    f = lambda z: math.exp(prior.log_density_internal(float(z)))  # noqa: E731
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def check_contrasts(prior) -> dict[str, float]:
    """Quadrature values of the quantities that define a prior.

    Correlation PC priors report total mass, ``P(rho <= rho0)`` and whichever
    tail probabilities were supplied; variance priors report total mass and
    ``P(sigma > u)``. Integration runs on the unconstrained internal scale.
    """
    if isinstance(prior, CorrelationPCPrior):
        z0 = float(rho_to_z(prior.rho0))
        left = _z_mass(prior, -np.inf, z0)
        right = _z_mass(prior, z0, np.inf)
        out = {"total": left + right, "P(rho<=rho0)": left, "omega1": prior.omega1,
               "lambda1": prior.lambda1, "lambda2": prior.lambda2,
               "continuity": prior.omega1 * prior.lambda1 - prior.omega2 * prior.lambda2}
        if "umin" in prior.inputs:
            out["P(rho<=umin)"] = _z_mass(prior, -np.inf, float(rho_to_z(prior.inputs["umin"])))
        if "umax" in prior.inputs:
            out["P(rho>umax)"] = _z_mass(prior, float(rho_to_z(prior.inputs["umax"])), np.inf)
        return out
    if isinstance(prior, VariancePCPrior):
        t_u = 2.0 * math.log(prior.u)
        below = _z_mass(prior, -np.inf, t_u)
        above = _z_mass(prior, t_u, np.inf)
        return {"total": below + above, "P(sigma>u)": above, "lambda": prior.lam}
    if isinstance(prior, (InverseGammaPrior, NormalZPrior)):
        return {"total": _z_mass(prior, -np.inf, np.inf)}
    raise TypeError(f"no contrasts to check for {prior!r}")


# ---------------------------------------------------------------------------
# presets and config strings

PRESETS = {
    "pc0": "pc-cor(strategy=1, rho0=0, omega1=0.5, umin=-0.9, alpha1=0.1)",
    "pc1": "pc-cor(strategy=1, rho0=-0.2, omega1=0.4, umin=-0.95, alpha1=0.05)",
    "pc2": "pc-cor(strategy=3, rho0=-0.2, umin=-0.9, alpha1=0.05, umax=0.8, alpha2=0.05)",
    "pc3": "pc-cor(strategy=2, rho0=-0.2, omega1=0.6, umax=0.4, alpha2=0.05)",
    "paul": "normal-z(mean=0, var=5)",
    # centre at z(-0.2) = logit(0.4)
    "shifted": f"normal-z(mean={float(rho_to_z(-0.2))!r}, var=5)",
    "pcvar": "pc-var(u=3, a=0.05)",
    "invgamma": "invgamma(shape=0.25, rate=0.025)",
}

_SPEC_RE = re.compile(r"^\s*([A-Za-z][\w-]*)\s*\((.*)\)\s*$", re.S)
_KEYS = {
    "pc-cor": {"strategy", "rho0", "omega1", "umin", "alpha1", "umax", "alpha2"},
    "pc-var": {"u", "a"},
    "normal-z": {"mean", "var"},
    "invgamma": {"shape", "rate"},
    "fixed": {"rho"},
}


def preset(name: str):
    return parse_prior(PRESETS[name.lower()])


def parse_prior(text: str):
    """Parse a prior from its config string, e.g. ``pc-var(u=3, a=0.05)``.

    Bare preset names (``pc0`` ... ``pc3``, ``paul``, ``shifted``, ``pcvar``,
    ``invgamma``) are accepted too.
    """
    key = text.strip().lower()
    if key in PRESETS:
        return parse_prior(PRESETS[key])
    m = _SPEC_RE.match(text)
    if not m:
        raise PriorSpecError(f"cannot parse prior specification {text!r}")
    name = m.group(1).lower()
    if name not in _KEYS:
        raise PriorSpecError(f"unknown prior {m.group(1)!r}; expected one of {', '.join(sorted(_KEYS))}")
    args: dict[str, float] = {}
    body = m.group(2).strip()
    for token in filter(None, (t.strip() for t in body.split(","))) if body else []:
        if "=" not in token:
            raise PriorSpecError(f"bad token {token!r} in {text!r}: expected key=value")
        k, v = (s.strip() for s in token.split("=", 1))
        k = k.lower()
        if k not in _KEYS[name]:
            raise PriorSpecError(f"bad token {token!r} in {text!r}: unknown key {k!r} for {name}")
        if v.upper() in ("NA", "NONE", ""):
            continue
        try:
            args[k] = float(v)
        except ValueError:
            raise PriorSpecError(f"bad token {token!r} in {text!r}: {v!r} is not a number") from None

    try:
        if name == "pc-cor":
            if "strategy" not in args or "rho0" not in args:
                raise PriorSpecError(f"{text!r}: pc-cor needs strategy and rho0")
            strategy = args.pop("strategy")
            if strategy not in (1.0, 2.0, 3.0):
                raise PriorSpecError(f"bad token 'strategy={strategy:g}' in {text!r}: expected 1, 2 or 3")
            rho0 = args.pop("rho0")
            return CorrelationPCPrior.from_contrasts(int(strategy), rho0, **args)
        if name == "pc-var":
            return VariancePCPrior.from_contrast(args["u"], args["a"])
        if name == "normal-z":
            return NormalZPrior(args["mean"], args["var"])
        if name == "invgamma":
            return InverseGammaPrior(args["shape"], args["rate"])
        return FixedCorrelation(args["rho"])
    except KeyError as exc:
        raise PriorSpecError(f"{text!r}: missing parameter {exc.args[0]!r}") from None
