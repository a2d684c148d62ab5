"""Closed-form expected scores under Gaussian truths.

These serve two purposes: ground truth for Monte-Carlo checks, and the exact
scoring paths of the simulation experiments (no ensemble sampling error).
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .core import GridDomain, ScoringError
from .grf import PowerExpCovariance, covariance_matrix
from .multivariate import GaussianVectorForecast, PairWeights, _weight_matrix
from .transforms import patch_index_matrix, square_patches
from .univariate import GaussianMarginal, MomentSummary, crps_gaussian

SQRT_PI = math.sqrt(math.pi)
LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianPair:
    """Gaussian forecast ``F`` and truth ``G``.

    ``truth`` may be a :class:`MomentSummary` for rules that only need
    moments (SE, DSS, ESS).
    """

    forecast: GaussianMarginal
    truth: Union[GaussianMarginal, MomentSummary]

    @property
    def mu_g(self):
        t = self.truth
        return t.mu if isinstance(t, GaussianMarginal) else t.mean

    @property
    def sigma_g(self):
        t = self.truth
        return t.sigma if isinstance(t, GaussianMarginal) else t.sd

    def gaussian_truth(self):
        if not isinstance(self.truth, GaussianMarginal):
            raise ScoringError("this expectation needs a Gaussian truth")
        return self.truth


def _norm_pdf(x, mu, var):
    return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


def expected_abs_normal(m, s):
    """``E|Z|`` for ``Z ~ N(m, s^2)``."""
    if s == 0:
        return abs(m)
    z = m / s
    return s * (2 * _norm_pdf(z, 0.0, 1.0) + z * (2 * special.ndtr(z) - 1))


def expected_univariate(score, pair: GaussianPair, **params) -> float:
    """``E_G[S(F, Y)]`` for a univariate rule.

    Supported ids: se, ae, qs (alpha), bs (t), crps, dss, ess, logs, hs,
    quads, pseudos (alpha).
    """
    f = pair.forecast
    mf, sf = f.mu, f.sigma
    mg, sg = pair.mu_g, pair.sigma_g
    if score == "se":
        return (mf - mg) ** 2 + sg**2
    if score == "dss":
        return math.log(sf**2) + ((mf - mg) ** 2 + sg**2) / sf**2
    if score == "ess":
        m = MomentSummary.of(pair.truth) if isinstance(pair.truth, GaussianMarginal) else pair.truth
        return _expected_ess(mf, sf, 0.0, m)
    g = pair.gaussian_truth()
    if score == "qs":
        return _expected_qs(f.ppf(params["alpha"]), params["alpha"], g)
    if score == "ae":
        return 2 * _expected_qs(f.median, 0.5, g)
    if score == "bs":
        t = params["t"]
        pf, pg = float(f.cdf(t)), float(g.cdf(t))
        return (pf - pg) ** 2 + pg * (1 - pg)
    if score == "crps":
        return expected_abs_normal(mf - mg, math.hypot(sf, sg)) - sf / SQRT_PI
    if score == "logs":
        kl = math.log(sf / sg) + (sg**2 + (mg - mf) ** 2) / (2 * sf**2) - 0.5
        entropy = 0.5 * math.log(2 * math.pi * math.e * sg**2)
        return kl + entropy
    if score == "hs":
        return -2 / sf**2 + ((mg - mf) ** 2 + sg**2) / sf**4
    if score == "quads":
        return 1 / (2 * SQRT_PI * sf) - 2 * _norm_pdf(mg, mf, sf**2 + sg**2)
    if score == "pseudos":
        a = params.get("alpha", 2.0)
        if not a > 1:
            raise ScoringError("alpha must exceed 1")
        s2 = sf**2 / (a - 1)
        # f^(a-1) is a rescaled Gaussian density with variance s2
        c = (2 * math.pi * sf**2) ** (-(a - 1) / 2) * math.sqrt(2 * math.pi * s2)
        inner = c * _norm_pdf(mg, mf, s2 + sg**2)
        norm_a = ((2 * math.pi * sf**2) ** ((1 - a) / 2) / math.sqrt(a)) ** (1 / a)
        return -inner / norm_a ** (a - 1)
    raise ScoringError(f"no closed-form expectation for {score!r}")


def _expected_qs(q, alpha, g):
    z = (q - g.mu) / g.sigma
    return (float(special.ndtr(z)) - alpha) * (q - g.mu) + g.sigma * _norm_pdf(z, 0.0, 1.0)


def _expected_ess(mf, sf, gf, m: MomentSummary):
    """Expected error-spread score from the first four moments of ``G``."""
    mg, vg, sg = m.mean, m.variance, m.sd
    b = mf - mg
    s2 = sf * sf
    # e = mu_F - Y = b - Z with Z centred, E Z^2 = vg, E Z^3 = sg^3 gamma, E Z^4 = vg^2 kurt
    ez = [1.0, 0.0, vg, sg**3 * m.skewness, vg**2 * m.kurtosis]

    def e_pow(k):
        return sum(math.comb(k, j) * b ** (k - j) * (-1) ** j * ez[j] for j in range(k + 1))

    c = sf * gf
    # (s2 - e^2 - c e)^2 expanded in powers of e
    return s2**2 - 2 * s2 * e_pow(2) - 2 * s2 * c * e_pow(1) + e_pow(4) + 2 * c * e_pow(3) + c * c * e_pow(2)


def expected_multivariate(score, forecast: GaussianVectorForecast, truth: GaussianVectorForecast, **params) -> float:
    """``E_G[S(F, Y)]`` for se, dss, vs (p, weights, grid), logs or hs."""
    if forecast.d != truth.d:
        raise ScoringError("forecast and truth dimensions differ")
    diff = truth.mu - forecast.mu
    if score == "se":
        return float(diff @ diff + np.trace(truth.sigma))
    if score in ("dss", "logs"):
        Lg = forecast.precision_times(truth.sigma)
        z = forecast.whiten(truth.mu)
        dss = forecast.logdet + float(z @ z) + float(np.trace(Lg))
        return dss if score == "dss" else 0.5 * (dss + forecast.d * LOG_2PI)
    if score == "hs":
        P = forecast.precision_times(np.eye(forecast.d))
        g = P @ diff
        return float(-2 * np.trace(P) + g @ g + np.sum(P * (truth.sigma @ P)))
    if score == "vs":
        p = params.get("p", 0.5)
        W = _weight_matrix(params.get("weights"), forecast.d, params.get("grid"))
        return expected_vs_matrix(forecast.sigma, truth.sigma, p, W, forecast.mu, truth.mu)
    raise ScoringError(f"no closed-form expectation for {score!r}")


# -- absolute moments and variogram-type scores -----------------------------------------


def gaussian_abs_moment(nu, sigma=1.0, mu=0.0):
    """``E|X|^nu`` for ``X ~ N(0, sigma^2)``: ``sigma^nu 2^(nu/2) Gamma((nu+1)/2) / sqrt(pi)``.

    Nonzero means need a confluent hypergeometric factor and are not supported.
    """
    if not nu > 0:
        raise ScoringError("nu must be positive")
    if mu != 0:
        raise ScoringError("absolute moments with nonzero mean are not supported")
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ScoringError("sigma must be nonnegative")
    return sigma**nu * 2 ** (nu / 2) * special.gamma((nu + 1) / 2) / SQRT_PI


def pair_difference_sd(C):
    """Standard deviations of ``X_i - X_j`` for ``X ~ N(., C)``."""
    v = np.diag(C)
    return np.sqrt(np.maximum(v[:, None] + v[None, :] - 2 * C, 0.0))


def _check_zero_mean_differences(mu, d):
    if mu is not None and np.ptp(np.asarray(mu, dtype=np.float64).reshape(-1)) != 0:
        raise ScoringError("closed variogram expectations need a constant mean")
    return d


def expected_pair_power(C, p, mu=None):
    """``E|X_i - X_j|^p`` as a ``d x d`` matrix (constant mean only)."""
    _check_zero_mean_differences(mu, C.shape[0])
    return gaussian_abs_moment(p, pair_difference_sd(C))


def closed_vs_matrix(C, p, W, y, mu=None):
    """Variogram score of ``N(mu, C)`` against ``y`` with weight matrix ``W``."""
    E = expected_pair_power(np.asarray(C, dtype=np.float64), p, mu)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    g = np.abs(y[:, None] - y[None, :]) ** p
    return float(np.sum(W * (E - g) ** 2))


def expected_vs_matrix(Cf, Cg, p, W, mu_f=None, mu_g=None):
    """``E_G[VS_p(F, Y)]``: ``sum w_ij (E_F^2 - 2 E_F E_G + E_G|Y_i - Y_j|^{2p})``."""
    Ef = expected_pair_power(Cf, p, mu_f)
    Eg = expected_pair_power(Cg, p, mu_g)
    Eg2 = expected_pair_power(Cg, 2 * p, mu_g)
    return float(np.sum(W * (Ef * Ef - 2 * Ef * Eg + Eg2)))


def _isotropic(cov):
    if not isinstance(cov, PowerExpCovariance) or cov.anisotropic:
        raise ScoringError("closed form needs an isotropic PowerExpCovariance")


def vs_pair_mean(cov: PowerExpCovariance, dist, p):
    """``E|X_s - X_s'|^p = 2^p sigma^p (1 - exp(-(h/lam)^beta))^(p/2) Gamma((p+1)/2) / sqrt(pi)``."""
    dist = np.asarray(dist, dtype=np.float64)
    rho = 1 - np.exp(-((dist / cov.lam) ** cov.beta))
    return 2**p * cov.sigma**p * rho ** (p / 2) * special.gamma((p + 1) / 2) / SQRT_PI


def closed_vs(cov: PowerExpCovariance, grid: GridDomain, p, weights, y):
    """Exact variogram score of the zero-mean field forecast ``N(0, C)``."""
    _isotropic(cov)
    xy = grid.coords()
    dist = np.sqrt(np.sum((xy[:, None, :] - xy[None, :, :]) ** 2, axis=-1))
    W = _weight_matrix(weights, grid.d, grid)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64).reshape(-1)
    g = np.abs(y[:, None] - y[None, :]) ** p
    return float(np.sum(W * (vs_pair_mean(cov, dist, p) - g) ** 2))


def pvs_sigma_z2(cov: PowerExpCovariance):
    """Variance of the second difference over a unit cell."""
    _isotropic(cov)
    return 4 * cov.sigma**2 * (
        1 + math.exp(-((math.sqrt(2) / cov.lam) ** cov.beta)) - 2 * math.exp(-((1 / cov.lam) ** cov.beta))
    )


def pvs_expected_transform(cov, p):
    return float(gaussian_abs_moment(p, math.sqrt(pvs_sigma_z2(cov))))


def closed_pvs(cov: PowerExpCovariance, grid: GridDomain, p, weights, y):
    """Exact p-variation score of the zero-mean field forecast ``N(0, C)``."""
    from .transforms import p_variation_values

    e = pvs_expected_transform(cov, p)
    t = p_variation_values(grid.as_fields(np.asarray(y, dtype=np.float64).reshape(-1)), p).reshape(-1)
    w = np.full(t.size, 1.0 / t.size) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    return float(np.dot(w, (e - t) ** 2))


# -- CRPS of spatial means --------------------------------------------------------


def patch_mean_moments(C, mu, idx):
    """Mean and variance of every patch mean; ``idx`` is ``(n_patches, |P|)``."""
    n = idx.shape[1]
    sub = C[idx[:, :, None], idx[:, None, :]]
    var = sub.sum(axis=(1, 2)) / (n * n)
    return np.asarray(mu, dtype=np.float64)[idx].mean(axis=1), var


def crps_spatial_mean_matrix(C, mu, grid, s, y, stride=1, weights=None):
    """Mean over patches of the Gaussian CRPS of the patch mean of ``N(mu, C)``."""
    idx = patch_index_matrix(square_patches(grid, int(s), stride))
    m, v = patch_mean_moments(np.asarray(C, dtype=np.float64), mu, idx)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64).reshape(-1)
    c = crps_gaussian((m, np.sqrt(v)), y[idx].mean(axis=1))
    w = np.full(c.size, 1.0 / c.size) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.dot(w, c))


def crps_spatial_mean_closed(cov: PowerExpCovariance, grid, s, y, mean=0.0, stride=1, weights=None):
    """Same for the field forecast with covariance ``cov`` and constant ``mean``.

    The patch-mean variance is ``sigma^2/|P|^2 sum_{s,s' in P} exp(-(|s-s'|/lam)^beta)``.
    """
    C = covariance_matrix(cov, grid)
    return crps_spatial_mean_matrix(C, np.full(grid.d, float(mean)), grid, s, y, stride, weights)
