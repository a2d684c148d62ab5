"""Gaussian random fields on a grid and the forecast constructions used in the
simulation experiments."""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np

from .core import EnsembleForecast, GridDomain, ScoringError
from .multivariate import GaussianVectorForecast, robust_cholesky


# -- covariance --------------------------------------------------------------


@dataclass(frozen=True)
class PowerExpCovariance:
    """``sigma^2 exp(-(dist(s, s') / lam)^beta)``.

    Without anisotropy ``dist`` is the Euclidean distance between sites. With
    ``theta`` and ``ratio`` set, lags ``u = s - s'`` (row, col order) go
    through ``A = [[cos t, -sin t], [r sin t, r cos t]]`` and ``dist`` is
    either ``||A u||`` (``form="norm"``, the default) or the quadratic form
    ``u' A_sym u`` with ``A_sym = (A + A')/2`` (``form="quadratic"``).
    """

    sigma: float = 1.0
    lam: float = 3.0
    beta: float = 1.0
    theta: Optional[float] = None
    ratio: Optional[float] = None
    form: str = "norm"

    def __post_init__(self):
        if not (self.sigma > 0 and self.lam > 0):
            raise ScoringError("sigma and lam must be positive")
        if not 0 < self.beta <= 2:
            raise ScoringError("beta must lie in (0, 2]")
        if (self.theta is None) != (self.ratio is None):
            raise ScoringError("anisotropy needs both theta and ratio")
        if self.anisotropic:
            if not -math.pi / 2 - 1e-12 <= self.theta <= math.pi / 2 + 1e-12:
                raise ScoringError("theta must lie in [-pi/2, pi/2]")
            if not self.ratio > 0:
                raise ScoringError("axis ratio must be positive")
            if self.form not in ("norm", "quadratic"):
                raise ScoringError(f"unknown anisotropy form {self.form!r}")
            if self.form == "quadratic" and np.min(np.linalg.eigvalsh(self.A_sym)) <= 0:
                raise ScoringError("symmetrized anisotropy form is not positive definite")

    @property
    def anisotropic(self) -> bool:
        return self.theta is not None

    @property
    def A(self) -> np.ndarray:
        if not self.anisotropic:
            return np.eye(2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [self.ratio * s, self.ratio * c]])

    @property
    def A_sym(self) -> np.ndarray:
        A = self.A
        return 0.5 * (A + A.T)

    def aniso_distance(self, u):
        """Anisotropic distance of lag vectors ``u`` with shape ``(..., 2)``."""
        u = np.asarray(u, dtype=np.float64)
        if self.form == "quadratic" and self.anisotropic:
            return np.einsum("...i,ij,...j->...", u, self.A_sym, u)
        v = u @ self.A.T
        return np.sqrt(np.sum(v * v, axis=-1))

    def distance(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.anisotropic:
            return self.aniso_distance(u)
        return np.sqrt(np.sum(u * u, axis=-1))

    def correlation_at(self, dist):
        return np.exp(-((np.asarray(dist, dtype=np.float64) / self.lam) ** self.beta))

    def __call__(self, dist):
        return self.sigma**2 * self.correlation_at(dist)

    def with_sigma(self, sigma):
        return PowerExpCovariance(sigma, self.lam, self.beta, self.theta, self.ratio, self.form)


def covariance_matrix(cov: PowerExpCovariance, grid: GridDomain) -> np.ndarray:
    """``d x d`` covariance of the field at all grid sites (flat order)."""
    xy = grid.coords()
    diff = xy[:, None, :] - xy[None, :, :]
    C = cov(cov.distance(diff))
    np.fill_diagonal(C, cov.sigma**2)
    return C


@lru_cache(maxsize=32)
def _factor(cov, grid):
    C = covariance_matrix(cov, grid)
    L, _ = robust_cholesky(C, cov.sigma**2)
    C.setflags(write=False)
    L.setflags(write=False)
    return C, L


def cholesky_factor(cov, grid):
    """Cached ``(C, L)`` with ``L L' = C`` up to jitter."""
    return _factor(cov, grid)


# -- random numbers -------------------------------------------------------


@dataclass(frozen=True)
class SeededRng:
    """Counter-based stream: Philox keyed by ``seed`` and a stream id tuple.

    Identical ``(seed, stream)`` pairs always give identical sequences, and
    distinct streams are statistically independent, so work can be split
    across threads without changing results.
    """

    seed: int
    stream: tuple = ()
    algorithm: str = "philox"

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(s) for s in self.stream))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *ids):
        return SeededRng(self.seed, self.stream + tuple(ids), self.algorithm)


def _generator(rng):
    if isinstance(rng, SeededRng):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_field(cov, grid, rng, n=1):
    """``n`` zero-mean draws of the field, shape ``(n, d)``."""
    _, L = cholesky_factor(cov, grid)
    z = _generator(rng).standard_normal((grid.d, n))
    return (L @ z).T


# -- forecasts ----------------------------------------------------------------

KINDS = ("gaussian", "student", "additive_noised", "multiplicative_noised")


@dataclass(frozen=True)
class FieldForecastSpec:
    """Parametric field forecast.

    * ``gaussian``: ``N(c, C)`` with ``C`` from ``covariance``;
    * ``student``: multivariate t with ``df`` degrees of freedom, the
      correlation of ``covariance`` and marginal standard deviation
      ``target_sd``;
    * ``additive_noised``: ``N(eps, C)`` with ``eps_s ~ U[-r, r]`` i.i.d.;
    * ``multiplicative_noised``: ``N(0, D C D)`` with ``D = diag(1 + eta)``,
      ``eta_s ~ U[-r, r]``.

    Noise fields are drawn once per forecast case and shared by all members.
    """

    name: str
    kind: str = "gaussian"
    covariance: PowerExpCovariance = field(default_factory=PowerExpCovariance)
    mean_offset: float = 0.0
    df: Optional[float] = None
    target_sd: Optional[float] = None
    noise_range: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScoringError(f"unknown forecast kind {self.kind!r}")
        if self.kind == "student":
            if self.df is None or not self.df > 2 or self.target_sd is None or not self.target_sd > 0:
                raise ScoringError("student forecast needs df > 2 and target_sd > 0")
        if self.noise_range < 0:
            raise ScoringError("noise range must be nonnegative")

    @property
    def tau(self):
        """Student scale giving standard deviation ``target_sd``."""
        return self.target_sd * math.sqrt((self.df - 2) / self.df)

    @property
    def sampled_only(self):
        return self.kind == "student"

    def to_dict(self):
        c = self.covariance
        out = {"name": self.name, "kind": self.kind, "sigma": c.sigma, "lam": c.lam, "beta": c.beta}
        if c.anisotropic:
            out.update(theta=c.theta, ratio=c.ratio, form=c.form)
        for k in ("mean_offset", "df", "target_sd", "noise_range"):
            v = getattr(self, k)
            if v:
                out[k] = v
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        cov = PowerExpCovariance(
            d.pop("sigma", 1.0), d.pop("lam", 3.0), d.pop("beta", 1.0),
            d.pop("theta", None), d.pop("ratio", None), d.pop("form", "norm"),
        )
        return cls(covariance=cov, **d)


class ForecastCase:
    """One issued forecast: fixed noise, an ensemble sampler and, for the
    Gaussian kinds, the analytic distribution."""

    def __init__(self, spec, grid, rng):
        self.spec = spec
        self.grid = grid
        self._rng = _generator(rng)
        cov = spec.covariance.with_sigma(1.0) if spec.kind == "student" else spec.covariance
        self._C, self._L = cholesky_factor(cov, grid)
        d = grid.d
        self.noise = None
        self.mean = np.full(d, float(spec.mean_offset))
        self.scale = None
        if spec.kind == "additive_noised":
            self.noise = self._rng.uniform(-spec.noise_range, spec.noise_range, d)
            self.mean = self.mean + self.noise
        elif spec.kind == "multiplicative_noised":
            self.noise = self._rng.uniform(-spec.noise_range, spec.noise_range, d)
            self.scale = 1.0 + self.noise

    @property
    def marginal_sd(self) -> np.ndarray:
        """Standard deviation at each site."""
        if self.spec.kind == "student":
            return np.full(self.grid.d, self.spec.target_sd)
        sd = np.full(self.grid.d, self.spec.covariance.sigma)
        return sd * self.scale if self.scale is not None else sd

    @cached_property
    def covariance(self) -> np.ndarray:
        if self.spec.kind == "student":
            return self.spec.target_sd**2 * self._C
        if self.scale is not None:
            return self.scale[:, None] * self._C * self.scale[None, :]
        return np.array(self._C)

    @cached_property
    def analytic(self) -> Optional[GaussianVectorForecast]:
        if self.spec.kind == "student":
            return None
        return GaussianVectorForecast(self.mean, self.covariance)

    def sample_members(self, M) -> np.ndarray:
        """``(M, d)`` ensemble drawn from this case's stream."""
        z = self._rng.standard_normal((self.grid.d, M))
        x = (self._L @ z).T
        if self.spec.kind == "student":
            w = self._rng.chisquare(self.spec.df, size=(M, 1))
            return self.spec.tau * x / np.sqrt(w / self.spec.df)
        if self.scale is not None:
            x = x * self.scale
        return x + self.mean

    def sample(self, M) -> EnsembleForecast:
        return EnsembleForecast(self.sample_members(M))


def make_forecast(spec: FieldForecastSpec, grid: GridDomain, rng) -> ForecastCase:
    return ForecastCase(spec, grid, rng)


# -- experiment forecast catalogs -------------------------------------------------

BASE = PowerExpCovariance(1.0, 3.0, 1.0)


def marginals_forecasts():
    return [
        FieldForecastSpec("ideal"),
        FieldForecastSpec("biased", mean_offset=0.255),
        FieldForecastSpec("underdispersed", covariance=BASE.with_sigma(2.0 / 3.0)),
        FieldForecastSpec("overdispersed", covariance=BASE.with_sigma(1.4)),
        FieldForecastSpec("student", kind="student", df=5.0, target_sd=0.745),
    ]


def dependence_forecasts():
    return [
        FieldForecastSpec("ideal"),
        FieldForecastSpec("small_range", covariance=PowerExpCovariance(1.0, 1.0, 1.0)),
        FieldForecastSpec("large_range", covariance=PowerExpCovariance(1.0, 5.0, 1.0)),
        FieldForecastSpec("under_smooth", covariance=PowerExpCovariance(1.0, 3.0, 0.5)),
        FieldForecastSpec("over_smooth", covariance=PowerExpCovariance(1.0, 3.0, 2.0)),
    ]


ANISO_TRUTH = PowerExpCovariance(1.0, 3.0, 1.0, theta=math.pi / 4, ratio=2.0)


def anisotropy_forecasts():
    def aniso(theta, ratio):
        return PowerExpCovariance(1.0, 3.0, 1.0, theta=theta, ratio=ratio)

    return [
        FieldForecastSpec("ideal", covariance=ANISO_TRUTH),
        FieldForecastSpec("small_angle", covariance=aniso(0.0, 2.0)),
        FieldForecastSpec("large_angle", covariance=aniso(math.pi / 2, 2.0)),
        FieldForecastSpec("isotropic", covariance=aniso(math.pi / 4, 1.0)),
        FieldForecastSpec("over_anisotropic", covariance=aniso(math.pi / 4, 3.0)),
    ]


NOISE_RANGES = (0.1, 0.25, 0.5)


def double_penalty_forecasts():
    out = [FieldForecastSpec("ideal")]
    for r in NOISE_RANGES:
        out.append(FieldForecastSpec(f"additive_r{r}", kind="additive_noised", noise_range=r))
    for r in NOISE_RANGES:
        out.append(FieldForecastSpec(f"multiplicative_r{r}", kind="multiplicative_noised", noise_range=r))
    return out
