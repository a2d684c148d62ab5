import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tascore.core import GridDomain, ScoringError
from tascore.grf import PowerExpCovariance
from tascore.multivariate import (
    GaussianVectorForecast,
    PairWeights,
    dss_mv,
    energy_score,
    hyvarinen_mv,
    load_weights_csv,
    logs_mv,
    robust_cholesky,
    se_mv,
    variogram_score,
)
from tascore.univariate import DensityForecast, crps_ensemble, hyvarinen, se

finite = st.floats(-20, 20, allow_nan=False)
# integer values keep shifts exact; |.|^0.5 amplifies rounding of near-zero differences
integral = st.integers(-20, 20).map(float)


def es_brute(x, y, alpha=1.0, fair=False):
    M = x.shape[0]
    obs = np.mean([np.linalg.norm(xm - y) ** alpha for xm in x])
    pairs = sum(np.linalg.norm(a - b) ** alpha for a in x for b in x)
    return obs - pairs / (2 * (M * (M - 1) if fair else M * M))


def vs_brute(x, y, p, w):
    d = y.size
    total = 0.0
    for i in range(d):
        for j in range(d):
            e = np.mean([abs(xm[i] - xm[j]) ** p for xm in x])
            total += w[i, j] * (e - abs(y[i] - y[j]) ** p) ** 2
    return total


def test_se_mv():
    assert se_mv([0, 0], [1, 1]) == 2
    assert se_mv([0.3, 2], [0.3, 2]) == 0
    with pytest.raises(ScoringError):
        se_mv([0, 0], [1, 1, 1])


def test_se_mv_is_sum_of_margins(rng):
    mu, y = rng.normal(size=5), rng.normal(size=5)
    assert se_mv(mu, y) == pytest.approx(sum(se(a, b) for a, b in zip(mu, y)))


def test_dss_mv_examples():
    f = GaussianVectorForecast(np.zeros(2), np.eye(2))
    assert dss_mv(f, [0, 0]) == 0
    assert dss_mv(f, [1, 1]) == pytest.approx(2)


def test_energy_score_examples():
    assert energy_score([[1.0, 2.0]], [1.0, 2.0]) == 0
    assert energy_score([[0.0, 0.0], [2.0, 0.0]], [1.0, 0.0]) == pytest.approx(0.5)
    with pytest.raises(ScoringError):
        energy_score([[0.0]], [0.0], alpha=2.0)


def test_energy_score_reduces_to_crps(rng):
    for _ in range(20):
        x = rng.normal(size=(int(rng.integers(1, 15)), 1))
        y = rng.normal()
        assert abs(energy_score(x, [y]) - crps_ensemble(x[:, 0], y, "kernel")) < 1e-12


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_energy_score_matches_enumeration(rng, alpha):
    x, y = rng.normal(size=(6, 4)), rng.normal(size=4)
    assert energy_score(x, y, alpha) == pytest.approx(es_brute(x, y, alpha))
    assert energy_score(x, y, alpha, "fair") == pytest.approx(es_brute(x, y, alpha, fair=True))


def test_energy_score_alpha2_identity(rng):
    # at alpha = 2 the kernel form equals ||mean - y||^2, so the limit is the SE of the mean
    x, y = rng.normal(size=(5, 3)), rng.normal(size=3)
    assert es_brute(x, y, 2.0) == pytest.approx(se_mv(x.mean(axis=0), y))


def test_variogram_score_examples():
    assert variogram_score([[0.0, 1.0]], [0.0, 1.0], p=0.7) == 0
    w = np.ones((2, 2))
    assert variogram_score([[0.0, 0.0], [0.0, 2.0]], [0.0, 1.0], p=1, w=PairWeights.custom(w)) == 0


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
def test_variogram_score_matches_enumeration(rng, p):
    x, y = rng.normal(size=(7, 5)), rng.normal(size=5)
    w = rng.random((5, 5))
    assert variogram_score(x, y, p, w) == pytest.approx(vs_brute(x, y, p, w))


def test_variogram_unbiased_estimator(rng):
    # averaging the unbiased score over many small ensembles gives the large-ensemble value
    C = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
    L = np.linalg.cholesky(C)
    y = np.array([0.3, -0.5, 1.0])
    big = (L @ rng.standard_normal((3, 400_000))).T
    target = variogram_score(big, y, 0.5)
    small = [variogram_score((L @ rng.standard_normal((3, 4))).T, y, 0.5, estimator="unbiased") for _ in range(20000)]
    assert abs(np.mean(small) - target) < 4 * np.std(small) / math.sqrt(len(small))


@given(arrays(np.float64, (4, 3), elements=integral), arrays(np.float64, 3, elements=integral), integral)
def test_variogram_shift_invariance(x, y, c):
    for est in ("plugin", "unbiased"):
        a = variogram_score(x, y, 0.5, estimator=est)
        b = variogram_score(x + c, y + c, 0.5, estimator=est)
        assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_variogram_bias_blindness():
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([0.5, 0.2])
    assert variogram_score(x + 3.7, y, 1.0) == pytest.approx(variogram_score(x, y, 1.0))


def test_weight_schemes(tmp_path):
    g = GridDomain(3, 3)
    aniso = PowerExpCovariance(theta=math.pi / 4, ratio=2.0)
    for pw in (PairWeights("uniform"), PairWeights("inverse_distance"), PairWeights("inverse_aniso_distance", covariance=aniso)):
        W = pw.resolve(9, g)
        assert np.all(W >= 0)
        np.testing.assert_allclose(W, W.T)
        assert np.all(np.diag(W) == 0)
        assert W.sum() == pytest.approx(1.0)
    W = PairWeights("inverse_distance").resolve(9, g)
    # sites 1 and 2 are one apart, sites 1 and 3 two apart
    assert W[0, 1] == pytest.approx(2 * W[0, 2])
    p = tmp_path / "w.csv"
    p.write_text("i,j,w\n1,2,0.5\n2,1,0.5\n")
    W = load_weights_csv(p, 2).resolve(2)
    np.testing.assert_array_equal(W, [[0, 0.5], [0.5, 0]])
    p.write_text("1,3,0.5\n")
    with pytest.raises(ScoringError, match="line 1"):
        load_weights_csv(p, 2)


def test_logs_mv_examples():
    f = GaussianVectorForecast([0.0], [[1.0]])
    assert logs_mv(f, [0.0]) == pytest.approx(0.918938533, abs=1e-9)
    d = 4
    mu = np.arange(d, dtype=float)
    assert logs_mv(GaussianVectorForecast(mu, np.eye(d)), mu) == pytest.approx(0.5 * d * math.log(2 * math.pi))


def test_dss_logs_identity(rng):
    A = rng.normal(size=(4, 4))
    f = GaussianVectorForecast(rng.normal(size=4), A @ A.T + 4 * np.eye(4))
    y = rng.normal(size=4)
    assert dss_mv(f, y) == pytest.approx(2 * logs_mv(f, y) - 4 * math.log(2 * math.pi))
    from scipy import stats

    assert logs_mv(f, y) == pytest.approx(-stats.multivariate_normal(f.mu, f.sigma).logpdf(y))


def test_hyvarinen_mv():
    f = GaussianVectorForecast(np.zeros(2), np.eye(2))
    assert hyvarinen_mv(f, [0.0, 0.0]) == pytest.approx(-4)
    g = GaussianVectorForecast([0.3], [[2.0]])
    assert hyvarinen_mv(g, [1.1]) == pytest.approx(hyvarinen(DensityForecast.gaussian(0.3, math.sqrt(2.0)), 1.1))


def test_hyvarinen_mv_finite_differences(rng):
    # 2 * Laplacian(log f) + |grad log f|^2 from a numerical log density; any scale factor drops out
    from scipy import stats

    A = rng.normal(size=(3, 3))
    f = GaussianVectorForecast(rng.normal(size=3), A @ A.T + np.eye(3))
    mvn = stats.multivariate_normal(f.mu, f.sigma)
    y = rng.normal(size=3)
    h = 1e-4
    grad, lap = np.zeros(3), 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        up, mid, dn = mvn.logpdf(y + e) + math.log(5), mvn.logpdf(y) + math.log(5), mvn.logpdf(y - e) + math.log(5)
        grad[k] = (up - dn) / (2 * h)
        lap += (up - 2 * mid + dn) / h**2
    assert hyvarinen_mv(f, y) == pytest.approx(2 * lap + grad @ grad, rel=1e-4)


def test_gaussian_vector_forecast_checks():
    with pytest.raises(ScoringError):
        GaussianVectorForecast([0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(ScoringError):
        dss_mv(np.zeros((3, 2)), [0.0, 0.0])
    with pytest.raises(ScoringError, match="analytic"):
        logs_mv(np.zeros((3, 2)), [0.0, 0.0])


def test_robust_cholesky_jitter():
    C = np.ones((3, 3))
    L, jit = robust_cholesky(C)
    assert 0 < jit <= 1e-6
    np.testing.assert_allclose(L @ L.T, C + jit * np.eye(3), atol=1e-12)
    with pytest.raises(ScoringError):
        robust_cholesky(-np.eye(2))


def test_es_propriety_mc(rng):
    # d = 4 Gaussian truth, ideal vs a wrong-range forecast, 2 000 obs x M = 50 with the fair estimator
    xy = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    dist = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
    Lt = np.linalg.cholesky(np.exp(-dist / 3))
    Lf = np.linalg.cholesky(np.exp(-dist / 0.3))
    d = []
    for _ in range(2000):
        y = Lt @ rng.standard_normal(4)
        a = energy_score((Lt @ rng.standard_normal((4, 50))).T, y, estimator="fair")
        b = energy_score((Lf @ rng.standard_normal((4, 50))).T, y, estimator="fair")
        d.append(b - a)
    d = np.array(d)
    assert d.mean() >= -2 * d.std(ddof=1) / math.sqrt(d.size)
