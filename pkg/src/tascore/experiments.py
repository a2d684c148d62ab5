"""The four simulation studies: marginals, dependence, anisotropy and double
penalty.

Each study draws observations from a Gaussian random field, issues every
forecast of its catalog for each observation and scores them. Scores use exact
formulas where they exist (Gaussian marginal scores, closed variogram and
p-variation scores, CRPS of patch means) and fresh ensembles of ``members``
draws otherwise.

Random streams are keyed by ``(repetition, forecast index, observation)``
(index 0 is the observation), so results do not depend on the number of
worker threads.
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import special

from . import _accel, compose, grf, oracles
from .core import GridDomain, ScoringError
from .multivariate import PairWeights
from .stats import dm_test, summarize
from .transforms import isotropy_values, p_variation_values, patch_index_matrix, square_patches
from .univariate import crps_ensemble, crps_gaussian, ensemble_quantile

SCHEMA_VERSION = 1
EXPERIMENTS = ("marginals", "dependence", "anisotropy", "double_penalty")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    grid_size: int = 20
    n_obs: int = 500
    members: int = 100
    reps: int = 10
    threads: Optional[int] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ScoringError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for name in ("grid_size", "n_obs", "members", "reps"):
            if int(getattr(self, name)) < 1:
                raise ScoringError(f"{name} must be positive")
        if self.n_obs < 2 and self.reps < 2:
            raise ScoringError("need at least two observations in total for the tests")
        if self.grid_size < 2:
            raise ScoringError("grid must be at least 2x2")

    @property
    def grid(self):
        return GridDomain(self.grid_size, self.grid_size)


# -- scoring helpers ------------------------------------------------------------------


def marginal_scores(mu, sd, y, spec):
    """Aggregated univariate score of Gaussian marginals ``N(mu, sd^2)``."""
    kind, arg = spec
    if kind == "crps":
        return float(np.mean(crps_gaussian((mu, sd), y)))
    if kind == "qs":
        q = mu + sd * special.ndtri(arg)
        return float(np.mean(((y <= q) - arg) * (q - y)))
    if kind == "bs":
        return float(np.mean((special.ndtr((arg - mu) / sd) - (y <= arg)) ** 2))
    if kind == "se":
        return float(np.mean((mu - y) ** 2))
    if kind == "dss":
        v = sd * sd
        return float(np.mean(np.log(v) + (mu - y) ** 2 / v))
    raise ScoringError(f"unsupported marginal score {kind!r}")


def ensemble_scores(x, y, spec):
    """The same scores estimated from an ``(M, d)`` ensemble."""
    kind, arg = spec
    if kind == "crps":
        return float(np.mean(crps_ensemble(x, y, "fair")))
    if kind == "qs":
        q = ensemble_quantile(x, arg)
        return float(np.mean(((y <= q) - arg) * (q - y)))
    if kind == "bs":
        return float(np.mean((np.mean(x <= arg, axis=0) - (y <= arg)) ** 2))
    if kind == "se":
        return float(np.mean((x.mean(axis=0) - y) ** 2))
    if kind == "dss":
        v = x.var(axis=0)
        return float(np.mean(np.log(v) + (x.mean(axis=0) - y) ** 2 / v))
    raise ScoringError(f"unsupported ensemble score {kind!r}")


class PairTerms:
    """Upper-triangle pair data for fast repeated variogram scores.

    ``sum_ij W_ij (E_ij - g_ij)^2`` is evaluated as
    ``2 sum_{i<j} W_ij (E_ij - g_ij)^2`` with ``g_ij = |y_i - y_j|^p``
    computed once per observation and shared by all forecasts.
    """

    def __init__(self, d):
        self.iu = np.triu_indices(d, 1)

    def upper(self, A):
        return np.ascontiguousarray(A[self.iu])

    def g(self, y, p):
        diff = np.abs(y[self.iu[0]] - y[self.iu[1]])
        if p == 0.5:
            return np.sqrt(diff)
        if p == 1:
            return diff
        if p == 2:
            return diff * diff
        return diff**p

    @staticmethod
    def score(w, e, g):
        r = e - g
        return float(2.0 * np.dot(w, r * r))


# -- studies ---------------------------------------------------------------------


class Study:
    name = ""
    scores: List[str] = []

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.forecasts = self.forecast_specs()
        self.truth = grf.BASE

    def forecast_specs(self):
        raise NotImplementedError

    def score_observation(self, y, cases) -> np.ndarray:
        """``(n_forecasts, n_scores)`` scores for one observation."""
        raise NotImplementedError

    def metadata(self):
        return {}


MARGINAL_SCORES = [
    ("crps", ("crps", None)),
    ("qs_0.5", ("qs", 0.5)),
    ("qs_0.75", ("qs", 0.75)),
    ("qs_0.95", ("qs", 0.95)),
    ("bs_0.5", ("bs", 0.5)),
    ("bs_1", ("bs", 1.0)),
    ("se", ("se", None)),
    ("dss", ("dss", None)),
]


class Marginals(Study):
    name = "marginals"
    scores = [s for s, _ in MARGINAL_SCORES]

    def forecast_specs(self):
        return grf.marginals_forecasts()

    def score_observation(self, y, cases):
        out = np.empty((len(cases), len(self.scores)))
        for i, case in enumerate(cases):
            if case.analytic is not None:
                mu, sd = case.mean, case.marginal_sd
                out[i] = [marginal_scores(mu, sd, y, spec) for _, spec in MARGINAL_SCORES]
            else:
                x = case.sample_members(self.cfg.members)
                out[i] = [ensemble_scores(x, y, spec) for _, spec in MARGINAL_SCORES]
        return out


VS_ORDERS = (0.5, 1.0, 2.0)
PATCH_SIZES = (2, 3, 5)


class Dependence(Study):
    name = "dependence"

    def __init__(self, cfg):
        super().__init__(cfg)
        g = self.grid
        self.sizes = [s for s in PATCH_SIZES if s < cfg.grid_size]
        self.scores = (
            [f"vs_p{p:g}" for p in VS_ORDERS]
            + [f"pvs_p{p:g}" for p in VS_ORDERS]
            + ["crps"]
            + [f"patched_es_s{s}" for s in self.sizes]
            + ["es"]
        )
        self.pairs = PairTerms(g.d)
        self.w = self.pairs.upper(PairWeights("inverse_distance").resolve(g.d, g))
        self.expected = []
        self.pvs_expected = []
        for spec in self.forecasts:
            C, _ = grf.cholesky_factor(spec.covariance, g)
            E = {p: self.pairs.upper(oracles.expected_pair_power(C, p)) for p in VS_ORDERS}
            self.expected.append(E)
            self.pvs_expected.append({p: oracles.pvs_expected_transform(spec.covariance, p) for p in VS_ORDERS})

    def forecast_specs(self):
        return grf.dependence_forecasts()

    def score_observation(self, y, cases):
        g = self.grid
        gy = {p: self.pairs.g(y, p) for p in VS_ORDERS}
        ty = {p: p_variation_values(g.as_fields(y), p).reshape(-1) for p in VS_ORDERS}
        all_sizes = self.sizes + [g.width]
        out = np.empty((len(cases), len(self.scores)))
        for i, case in enumerate(cases):
            row = [PairTerms.score(self.w, self.expected[i][p], gy[p]) for p in VS_ORDERS]
            row += [float(np.mean((self.pvs_expected[i][p] - ty[p]) ** 2)) for p in VS_ORDERS]
            row.append(marginal_scores(case.mean, case.marginal_sd, y, ("crps", None)))
            x = case.sample_members(self.cfg.members)
            pes = compose.patched_energy_scores(x, y, all_sizes, grid=g)
            row += [pes[s] for s in all_sizes]
            out[i] = row
        return out


AS_SCALES = (1, 2, 3, 4, 5)


class Anisotropy(Study):
    name = "anisotropy"

    def __init__(self, cfg):
        super().__init__(cfg)
        g = self.grid
        self.truth = grf.ANISO_TRUTH
        self.scales = [h for h in AS_SCALES if h < cfg.grid_size]
        self.scores = ["vs_standard", "vs_informed"] + [f"as_h{h}" for h in self.scales] + ["as_agg"]
        self.pairs = PairTerms(g.d)
        self.w_std = self.pairs.upper(PairWeights("inverse_distance").resolve(g.d, g))
        self.w_inf = self.pairs.upper(
            PairWeights("inverse_aniso_distance", covariance=self.truth).resolve(g.d, g)
        )
        self.expected = [
            self.pairs.upper(oracles.expected_pair_power(grf.cholesky_factor(s.covariance, g)[0], 0.5))
            for s in self.forecasts
        ]
        self.h_weights = np.array([1.0 / h for h in self.scales])

    def forecast_specs(self):
        return grf.anisotropy_forecasts()

    def score_observation(self, y, cases):
        g = self.grid
        gy = self.pairs.g(y, 0.5)
        fy = g.as_fields(y)
        ty = np.array([isotropy_values(fy, g, h, "diagonal") for h in self.scales])
        out = np.empty((len(cases), len(self.scores)))
        for i, case in enumerate(cases):
            row = [PairTerms.score(self.w_std, self.expected[i], gy), PairTerms.score(self.w_inf, self.expected[i], gy)]
            fx = g.as_fields(case.sample_members(self.cfg.members))
            tx = np.stack([isotropy_values(fx, g, h, "diagonal") for h in self.scales], axis=-1)
            per_h = (tx.mean(axis=0) - ty) ** 2
            row += per_h.tolist()
            row.append(float(np.dot(self.h_weights, per_h)))
            out[i] = row
        return out


DP_SIZES = (1, 2, 3, 5)
DP_THRESHOLD = 1.0


class DoublePenalty(Study):
    name = "double_penalty"

    def __init__(self, cfg):
        super().__init__(cfg)
        self.sizes = [s for s in DP_SIZES if s <= cfg.grid_size]
        self.scores = (
            ["crps"]
            + [f"crps_mean_s{s}" for s in self.sizes]
            + [f"bs_{DP_THRESHOLD:g}"]
            + [f"se_fte_s{s}" for s in self.sizes]
        )
        self.idx = {s: patch_index_matrix(square_patches(self.grid, s)) for s in self.sizes}
        C, _ = grf.cholesky_factor(grf.BASE, self.grid)
        self.base_C = C
        # patch-mean variances of the unperturbed field
        self.base_var = {s: oracles.patch_mean_moments(C, np.zeros(self.grid.d), self.idx[s])[1] for s in self.sizes}

    def forecast_specs(self):
        return grf.double_penalty_forecasts()

    def _patch_moments(self, case, s):
        idx = self.idx[s]
        m = case.mean[idx].mean(axis=1)
        if case.scale is None:
            return m, self.base_var[s]
        v = case.scale[idx]
        sub = self.base_C[idx[:, :, None], idx[:, None, :]]
        var = np.einsum("pi,pij,pj->p", v, sub, v) / idx.shape[1] ** 2
        return m, var

    def score_observation(self, y, cases):
        t = DP_THRESHOLD
        my = {s: y[self.idx[s]].mean(axis=1) for s in self.sizes}
        fy = {s: np.mean(y[self.idx[s]] >= t, axis=1) for s in self.sizes}
        out = np.empty((len(cases), len(self.scores)))
        for i, case in enumerate(cases):
            mu, sd = case.mean, case.marginal_sd
            row = [marginal_scores(mu, sd, y, ("crps", None))]
            for s in self.sizes:
                m, v = self._patch_moments(case, s)
                row.append(float(np.mean(crps_gaussian((m, np.sqrt(v)), my[s]))))
            row.append(marginal_scores(mu, sd, y, ("bs", t)))
            x = case.sample_members(self.cfg.members)
            for s in self.sizes:
                fx = np.mean(x[:, self.idx[s]] >= t, axis=-1).mean(axis=0)
                row.append(float(np.mean((fx - fy[s]) ** 2)))
            out[i] = row
        return out


STUDIES = {"marginals": Marginals, "dependence": Dependence, "anisotropy": Anisotropy, "double_penalty": DoublePenalty}


# -- running ------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    forecasts: List[str]
    scores: List[str]
    values: np.ndarray  # (reps, n_obs, n_forecasts, n_scores)
    metadata: Dict = field(default_factory=dict)

    def series(self, score, forecast, rep=None):
        a = self.values[:, :, self.forecasts.index(forecast), self.scores.index(score)]
        return a.reshape(-1) if rep is None else a[rep]

    def summary(self, score, forecast):
        ideal = float(np.mean(self.series(score, self.forecasts[0])))
        reps = [self.series(score, forecast, r) for r in range(self.values.shape[0])]
        return summarize(reps, ideal)

    def dm(self, score, a, b, rep=None):
        return dm_test(self.series(score, a, rep), self.series(score, b, rep))


def _run_chunk(study, cfg, tasks):
    out = []
    for rep, obs in tasks:
        y = grf.sample_field(study.truth, study.grid, grf.SeededRng(cfg.seed, (rep, 0, obs)))[0]
        cases = [
            grf.make_forecast(spec, study.grid, grf.SeededRng(cfg.seed, (rep, j + 1, obs)))
            for j, spec in enumerate(study.forecasts)
        ]
        out.append(study.score_observation(y, cases))
    return out


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    study = STUDIES[cfg.experiment](cfg)
    tasks = [(r, i) for r in range(cfg.reps) for i in range(cfg.n_obs)]
    threads = cfg.threads or _accel.default_threads()
    values = np.empty((cfg.reps, cfg.n_obs, len(study.forecasts), len(study.scores)))
    chunk = max(1, min(50, len(tasks) // max(1, 4 * threads)))
    chunks = [tasks[k : k + chunk] for k in range(0, len(tasks), chunk)]

    def store(ch, res):
        for (r, i), v in zip(ch, res):
            values[r, i] = v

    if threads <= 1:
        for n, ch in enumerate(chunks):
            store(ch, _run_chunk(study, cfg, ch))
            if progress:
                progress(n + 1, len(chunks))
    else:
        with ThreadPoolExecutor(threads) as pool:
            for n, (ch, res) in enumerate(zip(chunks, pool.map(lambda c: _run_chunk(study, cfg, c), chunks))):
                store(ch, res)
                if progress:
                    progress(n + 1, len(chunks))
    if not np.all(np.isfinite(values)):
        raise ScoringError("non-finite score encountered")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in asdict(cfg).items() if k != "threads"},
        "forecasts": [s.to_dict() for s in study.forecasts],
        "scores": study.scores,
        "dm_pooling": "pooled over all repetitions and observations; per-repetition tests also listed",
        "dm_level": 0.05,
    }
    return ExperimentResult(cfg, [s.name for s in study.forecasts], list(study.scores), values, meta)


# -- output ------------------------------------------------------------------------


def _fmt(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _writer(path, header):
    fh = open(path, "w", newline="")
    fh.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def write_outputs(result: ExperimentResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    name = result.config.experiment
    R, N, F, S = result.values.shape

    fh, w = _writer(os.path.join(out_dir, "scores.csv"), ["experiment", "rep", "obs", "forecast", "score", "value"])
    with fh:
        for r in range(R):
            for i in range(N):
                for f in range(F):
                    for s in range(S):
                        w.writerow([name, r, i, result.forecasts[f], result.scores[s], _fmt(result.values[r, i, f, s])])

    fh, w = _writer(
        os.path.join(out_dir, "dm_tests.csv"),
        ["score", "forecast_a", "forecast_b", "scope", "n", "dm_stat", "p_value", "significant", "better"],
    )
    with fh:
        for score in result.scores:
            for a in range(F):
                for b in range(a + 1, F):
                    fa, fb = result.forecasts[a], result.forecasts[b]
                    scopes = [("pooled", None)] + ([(f"rep{r}", r) for r in range(R)] if N >= 2 else [])
                    for scope, rep in scopes:
                        c = result.dm(score, fa, fb, rep)
                        w.writerow([score, fa, fb, scope, c.n, _fmt(c.dm_statistic), _fmt(c.p_value),
                                    int(c.significant), c.better])

    fh, w = _writer(
        os.path.join(out_dir, "summary.csv"),
        ["score", "forecast", "mean", "std_error", "rescaled_mean"] + [f"rep{r}_mean" for r in range(R)],
    )
    with fh:
        for score in result.scores:
            for fc in result.forecasts:
                sm = result.summary(score, fc)
                w.writerow([score, fc, _fmt(sm.mean), _fmt(sm.std_error), _fmt(sm.rescaled_mean)]
                           + [_fmt(v) for v in sm.repetition_means])

    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(result.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
