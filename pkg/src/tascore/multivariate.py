"""Multivariate scoring rules: SE, Dawid-Sebastiani, energy, variogram and the
Gaussian logarithmic and Hyvarinen scores."""

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from . import _kernels
from .core import EnsembleForecast, GridDomain, ScoringError

LOG_2PI = math.log(2.0 * math.pi)

JITTER_START = 1e-10
JITTER_MAX = 1e-6


def robust_cholesky(C, scale=None):
    """Lower Cholesky factor of ``C``, adding diagonal jitter if needed.

    Jitter starts at ``1e-10 * scale`` (``scale`` defaults to the mean diagonal)
    and grows tenfold up to ``1e-6 * scale``. Returns ``(L, jitter)``.
    """
    C = np.asarray(C, dtype=np.float64)
    if scale is None:
        scale = float(np.mean(np.diag(C)))
    try:
        return linalg.cholesky(C, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    eps = JITTER_START
    eye = np.eye(C.shape[0])
    while eps <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cholesky(C + eps * scale * eye, lower=True, check_finite=False), eps * scale
        except linalg.LinAlgError:
            eps *= 10
    raise ScoringError("covariance matrix is not positive definite, even with jitter")


class GaussianVectorForecast:
    """Multivariate normal forecast ``N(mu, Sigma)``."""

    def __init__(self, mu, sigma):
        mu = np.asarray(mu, dtype=np.float64).reshape(-1)
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.shape != (mu.size, mu.size):
            raise ScoringError("covariance must be d x d")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * np.max(np.abs(sigma))):
            raise ScoringError("covariance must be symmetric")
        self.mu = mu
        self.sigma = sigma

    @property
    def d(self):
        return self.mu.size

    @cached_property
    def cholesky(self):
        return robust_cholesky(self.sigma)[0]

    @cached_property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky))))

    @cached_property
    def precision_trace(self):
        Linv = linalg.solve_triangular(self.cholesky, np.eye(self.d), lower=True)
        return float(np.sum(Linv * Linv))

    def whiten(self, y):
        """``L^{-1} (y - mu)``."""
        return linalg.solve_triangular(self.cholesky, np.asarray(y) - self.mu, lower=True)

    def precision_times(self, v):
        return linalg.cho_solve((self.cholesky, True), v)

    def sample(self, rng, M):
        z = rng.standard_normal((self.d, M))
        return (self.cholesky @ z).T + self.mu

    def __repr__(self):
        return f"GaussianVectorForecast(d={self.d})"


def _members(f):
    if isinstance(f, EnsembleForecast):
        return f.members
    m = np.asarray(f, dtype=np.float64)
    return m[:, None] if m.ndim == 1 else m


def _vec(y, d=None):
    y = np.asarray(getattr(y, "values", y), dtype=np.float64).reshape(-1)
    if d is not None and y.size != d:
        raise ScoringError(f"dimension mismatch: forecast has d={d}, observation {y.size}")
    return y


# -- squared error and Dawid-Sebastiani ---------------------------------------


def se_mv(mu_f, y):
    """``||mu_F - y||^2``."""
    mu_f = np.asarray(mu_f, dtype=np.float64).reshape(-1)
    y = _vec(y, mu_f.size)
    return float(np.sum((mu_f - y) ** 2))


def dss_mv(f, y):
    """``log det Sigma + (mu - y)' Sigma^{-1} (mu - y)``.

    ``f`` is a :class:`GaussianVectorForecast` or an ensemble, in which case
    the empirical mean and covariance (1/M normalizer) are used.
    """
    if not isinstance(f, GaussianVectorForecast):
        x = _members(f)
        mu = x.mean(axis=0)
        c = x - mu
        cov = c.T @ c / x.shape[0]
        try:
            L = linalg.cholesky(cov, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise ScoringError("ensemble covariance is singular") from None
        y = _vec(y, mu.size)
        z = linalg.solve_triangular(L, y - mu, lower=True)
        return float(2 * np.sum(np.log(np.diag(L))) + z @ z)
    y = _vec(y, f.d)
    z = f.whiten(y)
    return float(f.logdet + z @ z)


# -- energy score ----------------------------------------------------------


def energy_score(f, y, alpha=1.0, estimator="kernel"):
    """Energy score of an ensemble.

    ``kernel``: ``mean ||x_m - y||^a - 1/(2M^2) sum_{m,k} ||x_m - x_k||^a``;
    ``fair`` replaces ``M^2`` by ``M(M-1)``.
    """
    if not 0 < alpha < 2:
        raise ScoringError("energy score order must lie in (0, 2)")
    x = _members(f)
    y = _vec(y, x.shape[1])
    M = x.shape[0]
    obs, pairs = _kernels.energy_terms(x, y, alpha)
    if estimator == "kernel":
        return obs - pairs / (M * M)
    if estimator == "fair":
        if M < 2:
            raise ScoringError("fair energy score needs at least two members")
        return obs - pairs / (M * (M - 1))
    raise ScoringError(f"unknown estimator {estimator!r}")


# -- variogram score -----------------------------------------------------------


@dataclass(frozen=True)
class PairWeights:
    """Pair weights ``w_ij`` for the variogram score.

    Built-in schemes have a zero diagonal, are symmetric and are normalized to
    sum to one. ``custom`` matrices are used as given.
    """

    scheme: str = "uniform"
    matrix: np.ndarray = None
    covariance: object = None

    SCHEMES = ("uniform", "inverse_distance", "inverse_aniso_distance", "custom")

    def __post_init__(self):
        if self.scheme not in self.SCHEMES:
            raise ScoringError(f"unknown weight scheme {self.scheme!r}")
        if self.scheme == "custom":
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or np.any(m < 0):
                raise ScoringError("custom weights must be a square nonnegative matrix")
            object.__setattr__(self, "matrix", m)
        if self.scheme == "inverse_aniso_distance" and self.covariance is None:
            raise ScoringError("inverse_aniso_distance needs an anisotropic covariance")

    @classmethod
    def custom(cls, matrix):
        return cls("custom", matrix=matrix)

    def resolve(self, d, grid: GridDomain = None) -> np.ndarray:
        """The ``d x d`` weight matrix."""
        if self.scheme == "custom":
            if self.matrix.shape != (d, d):
                raise ScoringError(f"weight matrix is {self.matrix.shape}, need {(d, d)}")
            return self.matrix
        if self.scheme == "uniform":
            w = np.ones((d, d))
        else:
            if grid is None or grid.d != d:
                raise ScoringError(f"scheme {self.scheme!r} needs the grid")
            diff = grid.coords()[:, None, :] - grid.coords()[None, :, :]
            if self.scheme == "inverse_distance":
                dist = np.sqrt(np.sum(diff**2, axis=-1))
            else:
                dist = self.covariance.aniso_distance(diff)
            with np.errstate(divide="ignore"):
                w = np.where(dist > 0, 1.0 / np.where(dist > 0, dist, 1.0), 0.0)
        np.fill_diagonal(w, 0.0)
        total = w.sum()
        return w / total if total > 0 else w


def load_weights_csv(path, d):
    """Read a custom weight matrix from rows ``i,j,w`` (1-based indices).

    Missing pairs get weight 0. A header line is optional.
    """
    w = np.zeros((d, d))
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().lower() in ("i", "#"):
                continue
            if len(row) != 3:
                raise ScoringError(f"{path}: line {lineno}: expected i,j,w")
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except ValueError:
                raise ScoringError(f"{path}: line {lineno}: malformed row") from None
            if not (1 <= i <= d and 1 <= j <= d) or v < 0:
                raise ScoringError(f"{path}: line {lineno}: index out of range or negative weight")
            w[i - 1, j - 1] = v
    return PairWeights.custom(w)


def _weight_matrix(w, d, grid):
    if w is None:
        w = PairWeights()
    if isinstance(w, PairWeights):
        return w.resolve(d, grid)
    if isinstance(w, str):
        return PairWeights(w).resolve(d, grid)
    return PairWeights.custom(w).resolve(d, grid)


def variogram_score(f, y, p=0.5, w=None, grid=None, estimator="plugin"):
    """Variogram score of order ``p``.

    ``sum_ij w_ij (E_F|X_i - X_j|^p - |y_i - y_j|^p)^2`` with the expectation
    taken under the ensemble. ``estimator="unbiased"`` subtracts the sampling
    variance of the ensemble mean from each squared term, which makes the
    score an unbiased estimate of the score of the distribution the ensemble
    was drawn from.
    """
    if not p > 0:
        raise ScoringError("variogram order must be positive")
    x = _members(f)
    d = x.shape[1]
    y = _vec(y, d)
    W = _weight_matrix(w, d, grid)
    if estimator == "plugin":
        return _kernels.vs_from_expected(_kernels.pairwise_mean_power(x, p), y, W, p)
    if estimator == "unbiased":
        M = x.shape[0]
        if M < 2:
            raise ScoringError("unbiased variogram score needs at least two members")
        mean, meansq = _kernels.pairwise_power_moments(x, p)
        var_of_mean = (meansq - mean * mean) / (M - 1)
        g = np.abs(y[:, None] - y[None, :]) ** p
        return float(np.sum(W * ((mean - g) ** 2 - var_of_mean)))
    raise ScoringError(f"unknown estimator {estimator!r}")


# -- Gaussian density scores -----------------------------------------------------


def _need_gaussian(f):
    if not isinstance(f, GaussianVectorForecast):
        raise ScoringError("density scores need an analytic GaussianVectorForecast")


def logs_mv(f, y):
    """Negative Gaussian log density at ``y``."""
    _need_gaussian(f)
    y = _vec(y, f.d)
    z = f.whiten(y)
    return float(0.5 * (f.d * LOG_2PI + f.logdet + z @ z))


def hyvarinen_mv(f, y):
    """``2 Laplacian(log f) + ||grad log f||^2 = -2 tr(P) + ||P (y - mu)||^2``."""
    _need_gaussian(f)
    y = _vec(y, f.d)
    g = f.precision_times(y - f.mu)
    return float(-2.0 * f.precision_trace + g @ g)
