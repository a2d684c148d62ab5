import numpy as np
import pytest
from hypothesis import given, strategies as st

from tascore.core import (
    EnsembleForecast,
    GridDomain,
    Observation,
    ScoreSeries,
    ScoringError,
    ScoringRuleSpec,
    evaluate,
    evaluate_series,
    read_ensemble,
    read_matrix_csv,
    read_observations,
    write_matrix_csv,
)


def test_evaluate_examples():
    assert evaluate(ScoringRuleSpec("se"), EnsembleForecast([[0.0]]), Observation([1.0])) == 1.0
    assert evaluate(ScoringRuleSpec("crps"), EnsembleForecast([[0.7]]), Observation([0.7])) == 0.0
    # F(0) = 0 for a single member at 1, and y = -1 <= 0
    assert evaluate(ScoringRuleSpec("bs", {"t": 0}), EnsembleForecast([[1.0]]), Observation([-1.0])) == 1.0


def test_evaluate_series_examples():
    rule = ScoringRuleSpec("crps")
    obs = [Observation([v]) for v in (0.5, 0.5, 0.5)]
    s = evaluate_series(rule, EnsembleForecast([[0.5]]), obs)
    assert list(s.values) == [0.0, 0.0, 0.0]

    one = evaluate_series(rule, EnsembleForecast([[0.0], [2.0]]), [Observation([1.0])])
    assert one.n == 1
    assert one[0] == evaluate(rule, EnsembleForecast([[0.0], [2.0]]), Observation([1.0]))

    ys = np.array([0.0, 1.0, -2.5, 4.0])
    s = evaluate_series(ScoringRuleSpec("se"), EnsembleForecast([[1.5]]), [Observation([v]) for v in ys])
    np.testing.assert_allclose(s.values, (1.5 - ys) ** 2)


def test_evaluate_series_per_observation_forecasts(rng):
    fs = [EnsembleForecast(rng.normal(size=(5, 3))) for _ in range(4)]
    ys = [Observation(rng.normal(size=3)) for _ in range(4)]
    rule = ScoringRuleSpec("es")
    s = evaluate_series(rule, lambda i: fs[i], ys)
    for i in range(4):
        assert s[i] == evaluate(rule, fs[i], ys[i])


def test_evaluate_series_attaches_index():
    ys = [Observation([0.0, 1.0]), Observation([0.0, 1.0])]
    bad = [EnsembleForecast([[0.0, 1.0]]), EnsembleForecast([[0.0, 1.0, 2.0]])]
    with pytest.raises(ScoringError, match="observation 1"):
        evaluate_series(ScoringRuleSpec("es"), bad, ys)


def test_rule_validation():
    with pytest.raises(ScoringError):
        ScoringRuleSpec("qs", {"alpha": 1.5})
    with pytest.raises(ScoringError):
        ScoringRuleSpec("qs")
    with pytest.raises(ScoringError):
        ScoringRuleSpec("es", {"alpha": 2.0})
    with pytest.raises(ScoringError):
        ScoringRuleSpec("vs", {"p": 0})
    with pytest.raises(ScoringError):
        ScoringRuleSpec("crps", {"bogus": 1})
    with pytest.raises(ScoringError):
        ScoringRuleSpec("nope")


def test_density_rule_needs_analytic_forecast():
    with pytest.raises(ScoringError, match="analytic"):
        evaluate(ScoringRuleSpec("logs"), EnsembleForecast([[0.0], [1.0]]), Observation([0.5]))


def test_dimension_mismatch():
    with pytest.raises(ScoringError, match="dimension"):
        evaluate(ScoringRuleSpec("se_mv"), EnsembleForecast([[0.0, 1.0]]), Observation([0.5]))


def test_validation_of_containers():
    with pytest.raises(ScoringError):
        Observation([np.nan])
    with pytest.raises(ScoringError):
        EnsembleForecast(np.zeros((0, 3)))
    with pytest.raises(ScoringError):
        GridDomain(0, 3)
    with pytest.raises(ScoringError):
        ScoreSeries("s", "f", [])


@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_flat_index_roundtrip(w, h, data):
    g = GridDomain(w, h)
    r = data.draw(st.integers(1, h))
    c = data.draw(st.integers(1, w))
    k = g.flatten((r, c))
    assert 1 <= k <= g.d
    assert g.unflatten(k) == (r, c)


def test_flat_layout_is_row_major():
    g = GridDomain(width=3, height=2)
    assert g.flatten((1, 1)) == 1
    assert g.flatten((1, 3)) == 3
    assert g.flatten((2, 1)) == 4
    x = np.arange(6.0)
    np.testing.assert_array_equal(g.as_fields(x), [[0, 1, 2], [3, 4, 5]])


def test_csv_roundtrip(tmp_path, rng):
    a = rng.normal(size=(4, 3))
    p = tmp_path / "f.csv"
    write_matrix_csv(p, a)
    np.testing.assert_array_equal(read_matrix_csv(p), a)
    assert read_ensemble(p).M == 4
    assert len(read_observations(p)) == 4


def test_csv_errors_name_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("v1,v2\n1,2\n3,x\n")
    with pytest.raises(ScoringError, match="line 3"):
        read_matrix_csv(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ScoringError, match="line 1"):
        read_matrix_csv(p)
    p.write_text("v1,v2\n1,2,3\n")
    with pytest.raises(ScoringError, match="line 2"):
        read_matrix_csv(p)


def test_evaluate_is_deterministic(rng):
    f = EnsembleForecast(rng.normal(size=(8, 16)))
    y = Observation(rng.normal(size=16))
    for name, params in [("es", {}), ("vs", {"p": 0.5}), ("patched_es", {"s": 2}), ("crps", {})]:
        rule = ScoringRuleSpec(name, params)
        assert evaluate(rule, f, y) == evaluate(rule, f, y)
