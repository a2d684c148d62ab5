import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tascore.core import ScoreSeries, ScoringError
from tascore.stats import dm_test, pooled, standard_error, summarize

# integer-valued scores keep the shifted differences exact
vals = arrays(np.float64, 30, elements=st.integers(-1000, 1000).map(float))


def test_dm_identical():
    a = np.arange(10.0)
    r = dm_test(a, a)
    assert (r.dm_statistic, r.p_value, r.better) == (0.0, 1.0, "tie")


def test_dm_constant_difference():
    r = dm_test(np.ones(100), np.zeros(100))
    assert r.dm_statistic == math.inf and r.p_value == 0 and r.better == "B"
    assert dm_test(np.zeros(100), np.ones(100)).better == "A"


def test_dm_synthetic():
    rng = np.random.default_rng(0)
    stats = []
    for _ in range(200):
        d = rng.normal(0.5, 1.0, 400)
        stats.append(dm_test(d, np.zeros(400)).dm_statistic)
    stats = np.array(stats)
    # the statistic is approximately N(10, 1)
    assert abs(stats.mean() - 10) < 4 * stats.std(ddof=1) / math.sqrt(stats.size) + 0.1
    r = dm_test(rng.normal(0.5, 1.0, 400), np.zeros(400))
    assert r.p_value < 0.05 and r.better == "B" and r.significant


def test_dm_formula(rng):
    a, b = rng.normal(size=50), rng.normal(size=50)
    d = a - b
    r = dm_test(ScoreSeries("s", "a", a), b)
    assert r.dm_statistic == pytest.approx(d.mean() / math.sqrt(d.var(ddof=1) / 50))
    from scipy import stats

    assert r.p_value == pytest.approx(2 * stats.norm.sf(abs(r.dm_statistic)))
    assert r.n == 50 and r.mean_difference == pytest.approx(d.mean())


def test_dm_errors():
    with pytest.raises(ScoringError):
        dm_test([1.0, 2.0], [1.0])
    with pytest.raises(ScoringError):
        dm_test([1.0], [2.0])


@given(vals, vals, st.integers(-1000, 1000).map(float))
def test_dm_antisymmetric_and_shift_invariant(a, b, c):
    r, s = dm_test(a, b), dm_test(b, a)
    assert r.dm_statistic == -s.dm_statistic
    assert 0 <= r.p_value <= 1
    assert r.better in ("A", "B", "tie")
    if r.better == "A":
        assert r.dm_statistic < 0 and r.p_value < 0.05
    shifted = dm_test(a + c, b + c)
    assert shifted.p_value == r.p_value


def test_summarize():
    s = summarize([np.full(5, 2.5)], 2.5)
    assert s.rescaled_mean == 1.0 and s.std_error == 0
    s = summarize([np.ones(4), np.full(4, 3.0)], 4.0)
    assert s.mean == 2 and s.repetition_means == (1.0, 3.0) and s.rescaled_mean == 0.5
    assert s.std_error >= 0
    rng = np.random.default_rng(2)
    ideal = [rng.normal(size=20) + 5 for _ in range(3)]
    m = float(np.mean(np.concatenate(ideal)))
    assert summarize(ideal, m).rescaled_mean == 1.0
    with pytest.raises(ScoringError):
        summarize([np.ones(3)], 0.0)
    with pytest.raises(ScoringError):
        summarize([], 1.0)


def test_standard_error_and_pooled():
    assert standard_error([1.0]) == 0
    assert standard_error([1.0, 3.0]) == pytest.approx(1.0)
    assert pooled([[1.0], [2.0, 3.0]]).tolist() == [1, 2, 3]
