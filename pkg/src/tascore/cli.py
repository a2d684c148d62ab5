"""Command-line interface.

``tascore experiment NAME --seed N --out DIR`` runs a simulation study and
writes ``scores.csv``, ``dm_tests.csv``, ``summary.csv`` and ``metadata.json``.

``tascore score --rule rule.json --forecast f.csv --obs y.csv --out s.csv``
scores observation files against an ensemble file.
"""

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import compose, transforms
from .core import GridDomain, ScoringError, ScoringRuleSpec, read_matrix_csv
from .core import evaluate as evaluate_rule
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment, write_outputs


# -- rule configuration -----------------------------------------------------------


def _grid_from(cfg, d):
    g = cfg.get("grid")
    if g is None:
        return compose.resolve_grid(d)
    return GridDomain(int(g[0]), int(g[1]))


def _patch_from(cfg, grid):
    if cfg is None or cfg == "all":
        return transforms.Patch.full(grid)
    if "sites" in cfg:
        return transforms.Patch(tuple(cfg["sites"]), grid)
    return transforms.Patch.square(grid, int(cfg["side"]), tuple(cfg.get("anchor", (1, 1))))


def build_transform(cfg, grid):
    """A :class:`Transformation` from a JSON object with a ``type`` key."""
    kind = cfg.get("type")
    if kind == "identity":
        return transforms.identity(grid.d)
    if kind == "projection":
        return transforms.projection(cfg["indices"], grid.d)
    if kind == "patch_statistic":
        return transforms.patch_statistic(_patch_from(cfg.get("patch"), grid), cfg.get("stat", "mean"), cfg.get("n"))
    if kind == "fte":
        return transforms.fte(_patch_from(cfg.get("patch"), grid), float(cfg["t"]))
    if kind == "variogram_pair":
        return transforms.variogram_pair(cfg["i"], cfg["j"], cfg.get("p", 1.0), grid.d)
    if kind == "directed_variogram":
        return transforms.directed_variogram(grid, tuple(cfg["h"]), cfg.get("p", 2.0))
    if kind == "isotropy":
        return transforms.isotropy_statistic(grid, int(cfg["h"]), cfg.get("axes", "grid"), cfg.get("p", 2.0))
    if kind == "p_variation":
        return transforms.p_variation_cell(grid, tuple(cfg["site"]), cfg.get("p", 1.0))
    if kind == "chaining":
        return transforms.chaining(cfg.get("v", "identity"), cfg.get("t"), grid.d)
    raise ScoringError(f"unknown transform type {kind!r}")


def build_scorer(cfg, d):
    """Callable ``(forecast, obs) -> score`` and a label, from a rule config.

    Accepted shapes::

        {"name": "crps", "parameters": {...}}
        {"name": "label", "base": {rule}, "transform": {...}}
        {"name": "label", "terms": [{"rule": {...}, "weight": w}, ...]}
    """
    if not isinstance(cfg, dict):
        raise ScoringError("rule config must be a JSON object")
    label = cfg.get("name", "score")
    if "terms" in cfg:
        terms = []
        for i, t in enumerate(cfg["terms"]):
            inner, _ = build_scorer(t["rule"], d)
            terms.append((inner, float(t.get("weight", 1.0))))
        agg = compose.Aggregation(tuple(terms))
        return (lambda f, y: compose.aggregate(agg, f, y)), label
    if "transform" in cfg:
        grid = _grid_from(cfg, d)
        base = cfg.get("base", {"name": "crps"})
        spec = ScoringRuleSpec(base["name"], base.get("parameters", {}))
        lifted = compose.lift(spec, build_transform(cfg["transform"], grid))
        return lifted.evaluate, label
    spec = ScoringRuleSpec(cfg["name"], cfg.get("parameters", {}))
    return (lambda f, y: evaluate_rule(spec, f, y)), spec.name


def score_files(rule_path, forecast_path, obs_path, out_path, members=None):
    """Score every observation; write ``obs,<label>`` rows. Returns the scores."""
    try:
        with open(rule_path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScoringError(f"{rule_path}: line {exc.lineno}: {exc.msg}") from None
    fx = read_matrix_csv(forecast_path)
    ys = read_matrix_csv(obs_path)
    if fx.shape[1] != ys.shape[1]:
        raise ScoringError(f"forecast has d={fx.shape[1]} columns but observations have {ys.shape[1]}")
    n = ys.shape[0]
    if members:
        if fx.shape[0] != n * members:
            raise ScoringError(f"expected {n} blocks of {members} members, got {fx.shape[0]} rows")
        blocks = [fx[i * members : (i + 1) * members] for i in range(n)]
    else:
        blocks = [fx] * n
    scorer, label = build_scorer(cfg, ys.shape[1])
    out = np.empty(n)
    for i in range(n):
        try:
            out[i] = scorer(blocks[i], ys[i])
        except ScoringError as exc:
            raise ScoringError(f"observation {i + 1}: {exc}") from exc
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["obs", label])
        for i, v in enumerate(out, start=1):
            w.writerow([i, repr(float(v))])
    return out


# -- entry point -----------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="tascore", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="run a simulation study")
    e.add_argument("name", choices=EXPERIMENTS)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--n-obs", type=int, default=500)
    e.add_argument("--members", type=int, default=100)
    e.add_argument("--reps", type=int, default=10)
    e.add_argument("--grid", type=int, default=20, help="grid side length")
    e.add_argument("--threads", type=int, default=None, help="worker threads (default: $TASCORE_THREADS or 1)")
    e.add_argument("--quiet", action="store_true")

    s = sub.add_parser("score", help="score observation files against an ensemble")
    s.add_argument("--rule", required=True, help="rule config (JSON)")
    s.add_argument("--forecast", required=True, help="ensemble CSV, one member per row")
    s.add_argument("--obs", required=True, help="observations CSV, one per row")
    s.add_argument("--out", required=True)
    s.add_argument("--members", type=int, default=None,
                   help="members per observation when the forecast file stacks one block per observation")
    return p


def _print_summary(result, stream):
    w = max(len(f) for f in result.forecasts)
    stream.write(f"{'score':<16} " + " ".join(f"{f:>{w}}" for f in result.forecasts) + "\n")
    for s in result.scores:
        vals = [result.summary(s, f).rescaled_mean for f in result.forecasts]
        stream.write(f"{s:<16} " + " ".join(f"{v:>{w}.4f}" for v in vals) + "\n")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "experiment":
            cfg = ExperimentConfig(args.name, args.seed, args.grid, args.n_obs, args.members, args.reps, args.threads)
            t0 = time.perf_counter()

            def progress(k, n):
                if not args.quiet and (k == n or k % max(1, n // 20) == 0):
                    sys.stderr.write(f"\r{args.name}: {k}/{n} chunks, {time.perf_counter() - t0:.0f}s")
                    if k == n:
                        sys.stderr.write("\n")

            result = run_experiment(cfg, progress)
            write_outputs(result, args.out)
            if not args.quiet:
                sys.stdout.write("rescaled mean scores (ideal = 1)\n")
                _print_summary(result, sys.stdout)
        else:
            score_files(args.rule, args.forecast, args.obs, args.out, args.members)
    except (ScoringError, OSError) as exc:
        sys.stderr.write(f"tascore: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
