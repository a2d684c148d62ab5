"""Univariate scoring rules, negatively oriented.

Point-forecast style rules (``se``, ``ae``, ``qs``, ``bs``) take the relevant
functional of the forecast directly. Ensemble rules accept a sample array whose
first axis indexes members; any trailing axes are broadcast against ``y`` so
that a whole field of sites can be scored in one call.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, special

from .core import ScoringError

SQRT_PI = math.sqrt(math.pi)
LOG_2PI = math.log(2.0 * math.pi)


# -- forecast representations -------------------------------------------------


class UnivariateEnsemble:
    """Equally weighted sample ``x_1..x_M`` of a univariate forecast."""

    def __init__(self, samples):
        s = np.asarray(samples, dtype=np.float64).reshape(-1)
        if s.size < 1 or not np.all(np.isfinite(s)):
            raise ScoringError("ensemble must be nonempty and finite")
        s.setflags(write=False)
        self.samples = s

    @property
    def M(self):
        return self.samples.size

    @cached_property
    def sorted(self):
        s = np.sort(self.samples)
        s.setflags(write=False)
        return s

    def quantile(self, alpha):
        return ensemble_quantile(self.sorted, alpha, presorted=True)

    def moments(self):
        return MomentSummary.from_samples(self.samples)

    def __repr__(self):
        return f"UnivariateEnsemble(M={self.M})"


@dataclass(frozen=True)
class GaussianMarginal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ScoringError("sigma must be positive")

    def cdf(self, x):
        return special.ndtr((np.asarray(x) - self.mu) / self.sigma)

    def ppf(self, q):
        return self.mu + self.sigma * special.ndtri(q)

    def pdf(self, x):
        z = (np.asarray(x) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi))

    @property
    def median(self):
        return self.mu

    @property
    def variance(self):
        return self.sigma**2


@dataclass(frozen=True)
class MomentSummary:
    """First moments of a forecast: mean, variance, skewness (and kurtosis)."""

    mean: float
    variance: float
    skewness: float = 0.0
    kurtosis: float = 3.0

    def __post_init__(self):
        if self.variance < 0:
            raise ScoringError("variance must be nonnegative")

    @property
    def sd(self):
        return math.sqrt(self.variance)

    @classmethod
    def from_samples(cls, x):
        """Plug-in moments of the empirical distribution (1/M normalizers)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        m = x.mean()
        c = x - m
        v = np.mean(c * c)
        if v > 0:
            z = c / math.sqrt(v)
            skew = np.mean(z**3)
            kurt = np.mean(z**4)
        else:
            skew, kurt = 0.0, 3.0
        return cls(float(m), float(v), float(skew), float(kurt))

    @classmethod
    def of(cls, g):
        if isinstance(g, MomentSummary):
            return g
        if isinstance(g, GaussianMarginal):
            return cls(g.mu, g.sigma**2, 0.0, 3.0)
        raise ScoringError(f"cannot take moments of {type(g).__name__}")


@lru_cache(maxsize=4096)
def _total_mass(family, params):
    """Quadrature of the unscaled density, cached per parameter set."""
    f = DensityForecast(family, check=False, **dict(params))
    p = f.params
    if family == "gaussian":
        mu, sd = p["mu"], p["sigma"]
        c = 1.0 / (sd * math.sqrt(2 * math.pi))

        def pdf(y):
            z = (y - mu) / sd
            return c * math.exp(-0.5 * z * z)

    elif family == "uniform":

        def pdf(y):
            return 1.0 / (p["b"] - p["a"])

    else:
        mu, tau, nu = p["mu"], p["tau"], p["df"]
        c = math.exp(math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)) / (math.sqrt(nu * math.pi) * tau)

        def pdf(y):
            z = (y - mu) / tau
            return c * (1 + z * z / nu) ** (-(nu + 1) / 2)

    return sum(integrate.quad(pdf, a, b, limit=200)[0] for a, b in f._pieces())


class DensityForecast:
    """Analytic univariate density from a known family.

    Supported families: ``gaussian(mu, sigma)``, ``uniform(a, b)`` and
    ``student(mu, tau, df)`` (location-scale Student t). ``scale`` multiplies
    the density without renormalizing, which is how scores that only need the
    density up to a constant are exercised.
    """

    FAMILIES = ("gaussian", "uniform", "student")

    def __init__(self, family, scale=1.0, check=True, **params):
        family = family.lower()
        if family not in self.FAMILIES:
            raise ScoringError(f"unknown density family {family!r}")
        self.family = family
        self.params = dict(params)
        self.scale = float(scale)
        if family == "gaussian":
            if not params["sigma"] > 0:
                raise ScoringError("sigma must be positive")
        elif family == "uniform":
            a, b = params["a"], params["b"]
            if not b > a:
                raise ScoringError("uniform needs a < b")
        else:
            if not (params["tau"] > 0 and params["df"] > 0):
                raise ScoringError("student needs tau > 0 and df > 0")
        if check:
            total = _total_mass(family, tuple(sorted((k, float(v)) for k, v in params.items())))
            if abs(total - 1.0) > 1e-6:
                raise ScoringError(f"density integrates to {total}, not 1")

    @classmethod
    def gaussian(cls, mu=0.0, sigma=1.0):
        return cls("gaussian", mu=mu, sigma=sigma)

    @classmethod
    def uniform(cls, a=0.0, b=1.0):
        return cls("uniform", a=a, b=b)

    @classmethod
    def student(cls, mu=0.0, tau=1.0, df=5.0):
        return cls("student", mu=mu, tau=tau, df=df)

    def scaled(self, c):
        """Unnormalized view with density ``c * f``."""
        return DensityForecast(self.family, scale=self.scale * c, check=False, **self.params)

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"DensityForecast.{self.family}({args})"

    @property
    def support(self):
        if self.family == "uniform":
            return (self.params["a"], self.params["b"])
        return (-np.inf, np.inf)

    def _pieces(self):
        if self.family == "uniform":
            return [self.support]
        loc = self.params["mu"]
        return [(-np.inf, loc), (loc, np.inf)]

    def _logpdf_unit(self, y):
        y = np.asarray(y, dtype=np.float64)
        p = self.params
        if self.family == "gaussian":
            z = (y - p["mu"]) / p["sigma"]
            return -0.5 * z * z - math.log(p["sigma"]) - 0.5 * math.log(2 * math.pi)
        if self.family == "uniform":
            inside = (y >= p["a"]) & (y <= p["b"])
            return np.where(inside, -math.log(p["b"] - p["a"]), -np.inf)
        nu, tau = p["df"], p["tau"]
        z = (y - p["mu"]) / tau
        c = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi) - math.log(tau)
        return c - (nu + 1) / 2 * np.log1p(z * z / nu)

    def pdf(self, y):
        return self.scale * np.exp(self._logpdf_unit(y))

    def logpdf(self, y):
        return math.log(self.scale) + self._logpdf_unit(y)

    def dlogpdf(self, y):
        """First derivative of ``log f``; unaffected by ``scale``."""
        y = np.asarray(y, dtype=np.float64)
        p = self.params
        if self.family == "gaussian":
            return -(y - p["mu"]) / p["sigma"] ** 2
        if self.family == "uniform":
            return np.zeros_like(y)
        u = y - p["mu"]
        nu, t2 = p["df"], p["tau"] ** 2
        return -(nu + 1) * u / (nu * t2 + u * u)

    def d2logpdf(self, y):
        """Second derivative of ``log f``; unaffected by ``scale``."""
        y = np.asarray(y, dtype=np.float64)
        p = self.params
        if self.family == "gaussian":
            return np.full_like(y, -1.0 / p["sigma"] ** 2)
        if self.family == "uniform":
            return np.zeros_like(y)
        u2 = (y - p["mu"]) ** 2
        nu, t2 = p["df"], p["tau"] ** 2
        return -(nu + 1) * (nu * t2 - u2) / (nu * t2 + u2) ** 2

    def dpdf(self, y):
        return self.pdf(y) * self.dlogpdf(y)

    def d2pdf(self, y):
        g = self.dlogpdf(y)
        return self.pdf(y) * (self.d2logpdf(y) + g * g)

    def power_integral(self, alpha):
        """``int f(y)^alpha dy`` of the (scaled) density."""
        p = self.params
        c = self.scale**alpha
        if self.family == "gaussian":
            s = p["sigma"]
            return c * (2 * math.pi * s * s) ** ((1 - alpha) / 2) / math.sqrt(alpha)
        if self.family == "uniform":
            return c * (p["b"] - p["a"]) ** (1 - alpha)
        nu, tau = p["df"], p["tau"]
        # closed form via beta functions: f(u) = k (1 + u^2/(nu tau^2))^{-(nu+1)/2}
        k = 1.0 / (tau * math.sqrt(nu) * special.beta(0.5, nu / 2))
        e = alpha * (nu + 1) / 2
        return c * k**alpha * tau * math.sqrt(nu) * special.beta(0.5, e - 0.5)

    def norm(self, alpha=2.0):
        """``L_alpha`` norm of the density."""
        if not alpha > 0:
            raise ScoringError("alpha must be positive")
        return self.power_integral(alpha) ** (1.0 / alpha)


# -- point-functional rules ---------------------------------------------------


def se(mu_f, y):
    """Squared error ``(mu_F - y)^2``."""
    return (np.asarray(mu_f, dtype=np.float64) - y) ** 2


def ae(median_f, y):
    """Absolute error ``|med(F) - y|``."""
    return np.abs(np.asarray(median_f, dtype=np.float64) - y)


def _check_level(alpha):
    if not 0.0 < alpha < 1.0:
        raise ScoringError(f"quantile level must lie in (0, 1), got {alpha}")


def qs(alpha, q_alpha, y):
    """Quantile (pinball) score ``(1{y <= q} - alpha)(q - y)``."""
    _check_level(alpha)
    q = np.asarray(q_alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return ((y <= q).astype(np.float64) - alpha) * (q - y)


def bs(t, p_cdf_at_t, y):
    """Brier score for the event ``y <= t`` given ``F(t)``."""
    p = np.asarray(p_cdf_at_t, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ScoringError("F(t) must lie in [0, 1]")
    return (p - (np.asarray(y) <= t)) ** 2


def ensemble_quantile(samples, alpha, presorted=False, axis=0):
    """Left-continuous inverse of the empirical CDF.

    Returns the order statistic ``x_(k)`` with ``k = ceil(alpha * M)``, i.e.
    the smallest member whose rank fraction reaches ``alpha``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if not presorted:
        x = np.sort(x, axis=axis)
    M = x.shape[axis]
    k = max(1, math.ceil(alpha * M - 1e-12))
    return np.take(x, k - 1, axis=axis)


def ensemble_cdf(samples, t, axis=0):
    """Empirical ``F(t)`` = fraction of members ``<= t``."""
    x = np.asarray(samples, dtype=np.float64)
    return np.mean(x <= t, axis=axis)


# -- CRPS ---------------------------------------------------------------------


def _samples_of(f):
    if isinstance(f, UnivariateEnsemble):
        return f.samples
    return np.asarray(f, dtype=np.float64)


def crps_ensemble(f, y, estimator=None):
    """CRPS of an ensemble.

    ``f`` is a :class:`UnivariateEnsemble` or an array with members along
    axis 0 (trailing axes broadcast against ``y``). ``estimator`` is
    ``"kernel"`` (plain empirical measure) or ``"fair"`` (unbiased spread
    term); it defaults to ``"fair"`` when ``M >= 2``.
    """
    x = _samples_of(f)
    M = x.shape[0]
    if estimator is None:
        estimator = "fair" if M >= 2 else "kernel"
    if estimator not in ("kernel", "fair"):
        raise ScoringError(f"unknown CRPS estimator {estimator!r}")
    if estimator == "fair" and M < 2:
        raise ScoringError("fair CRPS needs at least two members")
    obs = np.mean(np.abs(x - y), axis=0)
    xs = np.sort(x, axis=0)
    # sum_{i<j} (x_(j) - x_(i)) = sum_i (2i - M - 1) x_(i)
    w = (2.0 * np.arange(1, M + 1) - M - 1).reshape((M,) + (1,) * (x.ndim - 1))
    pairs = np.sum(w * xs, axis=0)
    denom = M * M if estimator == "kernel" else M * (M - 1)
    return obs - pairs / denom


def crps_gaussian(g, y):
    """Closed-form CRPS of ``N(mu, sigma^2)``; ``g`` may also be ``(mu, sigma)``."""
    mu, sigma = (g.mu, g.sigma) if isinstance(g, GaussianMarginal) else g
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ScoringError("sigma must be positive")
    z = (np.asarray(y) - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return sigma * (z * (2 * special.ndtr(z) - 1) + 2 * pdf - 1 / SQRT_PI)


# -- moment-based rules --------------------------------------------------------


def dss(g, y):
    """Dawid-Sebastiani score ``2 log sigma + (mu - y)^2 / sigma^2``."""
    m = MomentSummary.of(g)
    if not m.variance > 0:
        raise ScoringError("DSS needs a positive forecast variance")
    return math.log(m.variance) + (m.mean - np.asarray(y)) ** 2 / m.variance


def ess(m, y):
    """Error-spread score ``(s^2 - e^2 - e s g)^2`` with ``e = mu - y``."""
    m = MomentSummary.of(m)
    e = m.mean - np.asarray(y, dtype=np.float64)
    return (m.variance - e * e - e * m.sd * m.skewness) ** 2


# -- density rules -----------------------------------------------------------


def _need_density(f):
    if not isinstance(f, DensityForecast):
        raise ScoringError("density scores need an analytic DensityForecast")


def logs(f, y):
    """Logarithmic (ignorance) score ``-log f(y)``."""
    _need_density(f)
    if np.any(f.pdf(y) <= 0):
        raise ScoringError("logarithmic score undefined where f(y) = 0")
    return -f.logpdf(y)


def hyvarinen(f, y):
    """Hyvarinen score ``2 f''/f - (f'/f)^2``, computed from log-derivatives."""
    _need_density(f)
    if np.any(f.pdf(y) <= 0):
        raise ScoringError("Hyvarinen score undefined where f(y) = 0")
    g = f.dlogpdf(y)
    return 2.0 * f.d2logpdf(y) + g * g


def quads(f, y):
    """Quadratic score ``||f||_2^2 - 2 f(y)``."""
    _need_density(f)
    return f.power_integral(2.0) - 2.0 * f.pdf(y)


def pseudos(f, y, alpha=2.0):
    """Pseudospherical score ``-f(y)^(a-1) / ||f||_a^(a-1)``; ``a = 2`` is spherical."""
    _need_density(f)
    if not alpha > 1:
        raise ScoringError("pseudospherical score needs alpha > 1")
    return -((f.pdf(y) / f.norm(alpha)) ** (alpha - 1))
