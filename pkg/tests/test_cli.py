import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from tascore.catalog import evaluate
from tascore.cli import main, score_files
from tascore.compose import crps_spatial_mean, patched_energy_score
from tascore.core import ScoringError, ScoringRuleSpec, write_matrix_csv
from tascore.experiments import EXPERIMENTS


def write_rule(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_scores(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], [float(r[1]) for r in rows[1:]]


def test_score_perfect_single_member(tmp_path):
    y = np.array([[0.5, -1.0, 2.0]])
    write_matrix_csv(tmp_path / "f.csv", y)
    write_matrix_csv(tmp_path / "y.csv", y)
    rule = write_rule(tmp_path / "r.json", {"name": "crps"})
    assert main(["score", "--rule", rule, "--forecast", str(tmp_path / "f.csv"), "--obs", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "s.csv")]) == 0
    header, vals = read_scores(tmp_path / "s.csv")
    assert header == ["obs", "crps"] and vals == [0.0]


def test_score_two_member_kernel_crps(tmp_path):
    write_matrix_csv(tmp_path / "f.csv", [[0.0], [2.0]])
    write_matrix_csv(tmp_path / "y.csv", [[1.0], [3.0]])
    rule = write_rule(tmp_path / "r.json", {"name": "crps", "parameters": {"estimator": "kernel"}})
    out = score_files(rule, tmp_path / "f.csv", tmp_path / "y.csv", tmp_path / "s.csv")
    assert out.tolist() == [0.5, 1.5]
    assert read_scores(tmp_path / "s.csv")[1] == [0.5, 1.5]


def test_score_blocks_and_composites(tmp_path, rng):
    x = rng.normal(size=(3 * 4, 9))
    ys = rng.normal(size=(3, 9))
    write_matrix_csv(tmp_path / "f.csv", x)
    write_matrix_csv(tmp_path / "y.csv", ys)
    rules = {
        "patched": ({"name": "patched_es", "parameters": {"s": 2}}, lambda b, y: patched_energy_score(b, y, 2)),
        "vs": ({"name": "vs", "parameters": {"p": 0.5, "weights": "inverse_distance"}},
               lambda b, y: evaluate(ScoringRuleSpec("vs", {"p": 0.5, "weights": "inverse_distance"}), b, y)),
        "lifted": ({"name": "mean_crps", "base": {"name": "crps", "parameters": {"estimator": "kernel"}},
                    "transform": {"type": "patch_statistic", "stat": "mean", "patch": {"side": 2, "anchor": [1, 1]}}},
                   lambda b, y: crps_spatial_mean(b[:, [0, 1, 3, 4]].reshape(4, 4), y[[0, 1, 3, 4]], 2, weights=[1.0])),
        "agg": ({"name": "agg", "terms": [{"rule": {"name": "es"}, "weight": 2.0}, {"rule": {"name": "se_mv"}, "weight": 0.5}]},
                lambda b, y: 2 * evaluate(ScoringRuleSpec("es"), b, y) + 0.5 * evaluate(ScoringRuleSpec("se_mv"), b, y)),
    }
    for key, (cfg, ref) in rules.items():
        rule = write_rule(tmp_path / f"{key}.json", cfg)
        got = score_files(rule, tmp_path / "f.csv", tmp_path / "y.csv", tmp_path / f"{key}.csv", members=4)
        want = [ref(x[4 * i : 4 * i + 4], ys[i]) for i in range(3)]
        np.testing.assert_allclose(got, want, rtol=1e-12, err_msg=key)
        assert read_scores(tmp_path / f"{key}.csv")[0][1] == cfg["name"]


def test_score_malformed_row(tmp_path, capsys):
    (tmp_path / "f.csv").write_text("v1,v2\n1.0,2.0\n1.0,oops\n")
    write_matrix_csv(tmp_path / "y.csv", [[0.0, 0.0]])
    rule = write_rule(tmp_path / "r.json", {"name": "es"})
    code = main(["score", "--rule", rule, "--forecast", str(tmp_path / "f.csv"), "--obs", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path / "s.csv")])
    assert code == 2
    assert "line 3" in capsys.readouterr().err
    (tmp_path / "f.csv").write_text("v1,v2\n1.0\n")
    with pytest.raises(ScoringError, match="line 2"):
        score_files(rule, tmp_path / "f.csv", tmp_path / "y.csv", tmp_path / "s.csv")


def test_score_config_errors(tmp_path):
    write_matrix_csv(tmp_path / "f.csv", [[0.0, 1.0]])
    write_matrix_csv(tmp_path / "y.csv", [[0.0]])
    rule = write_rule(tmp_path / "r.json", {"name": "crps"})
    with pytest.raises(ScoringError, match="columns"):
        score_files(rule, tmp_path / "f.csv", tmp_path / "y.csv", tmp_path / "s.csv")
    (tmp_path / "bad.json").write_text('{"name": "crps",\n "x": }')
    with pytest.raises(ScoringError, match="line 2"):
        score_files(tmp_path / "bad.json", tmp_path / "f.csv", tmp_path / "f.csv", tmp_path / "s.csv")
    rule = write_rule(tmp_path / "u.json", {"name": "nope"})
    with pytest.raises(ScoringError):
        score_files(rule, tmp_path / "f.csv", tmp_path / "f.csv", tmp_path / "s.csv")


def run_small(name, out, threads):
    argv = ["experiment", name, "--seed", "3", "--out", str(out), "--n-obs", "6", "--members", "8", "--reps", "2",
            "--grid", "6", "--threads", str(threads), "--quiet"]
    assert main(argv) == 0


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_experiment_outputs(tmp_path, name):
    run_small(name, tmp_path / "a", 1)
    run_small(name, tmp_path / "b", 3)
    run_small(name, tmp_path / "c", 1)
    for f in ("scores.csv", "dm_tests.csv", "summary.csv", "metadata.json"):
        a = (tmp_path / "a" / f).read_bytes()
        assert a == (tmp_path / "b" / f).read_bytes() == (tmp_path / "c" / f).read_bytes(), f
    lines = (tmp_path / "a" / "scores.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    rows = list(csv.DictReader(lines[1:]))
    assert all(math.isfinite(float(r["value"])) for r in rows)
    summary = list(csv.DictReader((tmp_path / "a" / "summary.csv").read_text().splitlines()[1:]))
    ideal = [r for r in summary if r["forecast"] == "ideal"]
    assert ideal and all(float(r["rescaled_mean"]) == 1.0 for r in ideal)
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert meta["config"]["experiment"] == name


def test_experiment_bad_args(tmp_path, capsys):
    assert main(["experiment", "marginals", "--out", str(tmp_path), "--reps", "0", "--quiet"]) == 2
    assert "reps" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "tascore.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "experiment" in out.stdout
