"""Registry of named scoring rules.

Every rule is negatively oriented. Univariate rules applied to a
``d``-dimensional forecast are averaged over sites (weights ``1/d``). Rules
marked analytic need a distribution object rather than an ensemble.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import special

from . import compose, multivariate as mv, univariate as uv
from .core import EnsembleForecast, GridDomain, ScoringError
from .kernel_series import kernel_score


REQUIRED = object()


@dataclass(frozen=True)
class Param:
    default: object
    check: Callable = field(default=lambda v: True, repr=False)
    hint: str = ""


@dataclass(frozen=True)
class Rule:
    name: str
    kind: str  # univariate | multivariate | composite | density
    params: Dict[str, Param]
    func: Callable = field(repr=False)
    dim: Optional[int] = None
    description: str = ""


def _pos(v):
    return float(v) > 0


def _unit(v):
    return 0 < float(v) < 1


def _es_order(v):
    return 0 < float(v) < 2


def _posint(v):
    return float(v) == int(v) and int(v) >= 1


def _choice(*opts):
    return lambda v: v in opts


def _real(v):
    return math.isfinite(float(v))


def _scales(v):
    return len(list(np.atleast_1d(v))) > 0 and all(_posint(h) for h in np.atleast_1d(v))


# -- forecast adapters -------------------------------------------------------


def _members(f):
    if isinstance(f, EnsembleForecast):
        return f.members
    if isinstance(f, uv.UnivariateEnsemble):
        return f.samples[:, None]
    if isinstance(f, (mv.GaussianVectorForecast, uv.DensityForecast, uv.GaussianMarginal)):
        raise ScoringError("this rule needs an ensemble forecast")
    m = np.asarray(f, dtype=np.float64)
    return m[:, None] if m.ndim == 1 else m


def _y(obs, d):
    y = np.asarray(getattr(obs, "values", obs), dtype=np.float64).reshape(-1)
    if y.size != d:
        raise ScoringError(f"dimension mismatch: forecast has d={d}, observation {y.size}")
    return y


def _marginals(f):
    """``(mu, sigma)`` vectors of an analytic Gaussian forecast, else ``None``."""
    if isinstance(f, mv.GaussianVectorForecast):
        return f.mu, np.sqrt(np.diag(f.sigma))
    if isinstance(f, uv.GaussianMarginal):
        return np.array([f.mu]), np.array([f.sigma])
    return None


def _grid(P, d):
    if P.get("width") is not None and P.get("height") is not None:
        return GridDomain(int(P["width"]), int(P["height"]))
    return compose.resolve_grid(d)


# -- univariate rules, averaged over sites ----------------------------------------


def _uni(ens_fn, gauss_fn=None):
    def run(f, obs, P):
        g = _marginals(f)
        if g is not None:
            if gauss_fn is None:
                raise ScoringError("this rule needs an ensemble forecast")
            mu, sd = g
            return float(np.mean(gauss_fn(mu, sd, _y(obs, mu.size), P)))
        x = _members(f)
        return float(np.mean(ens_fn(x, _y(obs, x.shape[1]), P)))

    return run


def _qs_ens(x, y, P):
    q = uv.ensemble_quantile(x, P["alpha"])
    return uv.qs(P["alpha"], q, y)


def _ae_ens(x, y, P):
    return uv.ae(uv.ensemble_quantile(x, 0.5), y)


def _dss_ens(x, y, P):
    m, v = x.mean(axis=0), x.var(axis=0)
    if np.any(v <= 0):
        raise ScoringError("DSS needs a positive ensemble variance at every site")
    return np.log(v) + (m - y) ** 2 / v


def _ess_ens(x, y, P):
    return np.array([uv.ess(uv.MomentSummary.from_samples(x[:, i]), y[i]) for i in range(y.size)])


def _kernel_ens(x, y, P):
    return np.array([kernel_score("gaussian", x[:, i], y[i], P["estimator"]) for i in range(y.size)])


def _crps_ens(x, y, P):
    return uv.crps_ensemble(x, y, P["estimator"])


def _qs_gauss(mu, sd, y, P):
    return uv.qs(P["alpha"], mu + sd * special.ndtri(P["alpha"]), y)


UNIVARIATE = {
    "se": (_uni(lambda x, y, P: (x.mean(axis=0) - y) ** 2, lambda m, s, y, P: (m - y) ** 2), {}),
    "ae": (_uni(_ae_ens, lambda m, s, y, P: np.abs(m - y)), {}),
    "qs": (_uni(_qs_ens, _qs_gauss), {"alpha": Param(REQUIRED, _unit, "0 < alpha < 1")}),
    "bs": (
        _uni(
            lambda x, y, P: (np.mean(x <= P["t"], axis=0) - (y <= P["t"])) ** 2,
            lambda m, s, y, P: (special.ndtr((P["t"] - m) / s) - (y <= P["t"])) ** 2,
        ),
        {"t": Param(REQUIRED, _real, "finite threshold")},
    ),
    "crps": (
        _uni(_crps_ens, lambda m, s, y, P: uv.crps_gaussian((m, s), y)),
        {"estimator": Param(None, _choice(None, "kernel", "fair"), "kernel or fair")},
    ),
    "dss": (_uni(_dss_ens, lambda m, s, y, P: np.log(s * s) + (m - y) ** 2 / (s * s)), {}),
    "ess": (_uni(_ess_ens, lambda m, s, y, P: (s * s - (m - y) ** 2) ** 2), {}),
    "kernel": (_uni(_kernel_ens), {"estimator": Param("kernel", _choice("kernel", "fair"))}),
}


# -- density rules ------------------------------------------------------------


def _density(fn):
    def run(f, obs, P):
        if isinstance(f, uv.GaussianMarginal):
            f = uv.DensityForecast.gaussian(f.mu, f.sigma)
        if not isinstance(f, uv.DensityForecast):
            raise ScoringError("density scores need an analytic forecast, not an ensemble")
        return float(fn(f, float(_y(obs, 1)[0]), P))

    return run


def _density_mv(uni_fn, mv_fn):
    def run(f, obs, P):
        if isinstance(f, mv.GaussianVectorForecast):
            return mv_fn(f, _y(obs, f.d))
        return _density(uni_fn)(f, obs, P)

    return run


DENSITY = {
    "logs": (_density_mv(lambda f, y, P: uv.logs(f, y), mv.logs_mv), {}),
    "hs": (_density_mv(lambda f, y, P: uv.hyvarinen(f, y), mv.hyvarinen_mv), {}),
    "quads": (_density(lambda f, y, P: uv.quads(f, y)), {}),
    "pseudos": (
        _density(lambda f, y, P: uv.pseudos(f, y, P["alpha"])),
        {"alpha": Param(2.0, lambda v: float(v) > 1, "alpha > 1")},
    ),
}


# -- multivariate rules --------------------------------------------------------


def _se_mv(f, obs, P):
    if isinstance(f, mv.GaussianVectorForecast):
        return mv.se_mv(f.mu, obs)
    x = _members(f)
    return mv.se_mv(x.mean(axis=0), _y(obs, x.shape[1]))


def _dss_mv(f, obs, P):
    return mv.dss_mv(f if isinstance(f, mv.GaussianVectorForecast) else _members(f), obs)


def _es(f, obs, P):
    return mv.energy_score(_members(f), obs, P["alpha"], P["estimator"])


def _vs(f, obs, P):
    x = _members(f)
    grid = None
    if P["weights"] in ("inverse_distance",):
        grid = _grid(P, x.shape[1])
    return mv.variogram_score(x, obs, P["p"], P["weights"], grid, P["estimator"])


MULTIVARIATE = {
    "se_mv": (_se_mv, {}),
    "dss_mv": (_dss_mv, {}),
    "es": (
        _es,
        {"alpha": Param(1.0, _es_order, "0 < alpha < 2"), "estimator": Param("kernel", _choice("kernel", "fair"))},
    ),
    "vs": (
        _vs,
        {
            "p": Param(0.5, _pos, "p > 0"),
            "weights": Param("uniform", _choice("uniform", "inverse_distance")),
            "estimator": Param("plugin", _choice("plugin", "unbiased")),
        },
    ),
}


# -- composites ----------------------------------------------------------------

GRID_PARAMS = {"width": Param(None, _posint), "height": Param(None, _posint)}


def _composite(fn):
    def run(f, obs, P):
        x = _members(f)
        return float(fn(x, _y(obs, x.shape[1]), _grid(P, x.shape[1]), P))

    return run


def _tw(base):
    def run(f, obs, P):
        from .core import ScoringRuleSpec

        inner = {k: P[k] for k in ("estimator", "alpha", "p") if k in P and P[k] is not None}
        s = compose.threshold_weighted(ScoringRuleSpec(base, inner), P["chaining"], P["t"])
        return s.evaluate(_members(f), obs)

    return run


_TW_COMMON = {
    "t": Param(REQUIRED, _real, "finite threshold"),
    "chaining": Param("threshold_clamp", _choice("threshold_clamp", "indicator")),
}

COMPOSITE = {
    "patched_es": (
        _composite(lambda x, y, g, P: compose.patched_energy_score(
            x, y, int(P["s"]), P["alpha"], g, int(P["stride"]), P["estimator"])),
        {
            "s": Param(REQUIRED, _posint, "patch size"),
            "alpha": Param(1.0, _es_order),
            "stride": Param(1, _posint),
            "estimator": Param("kernel", _choice("kernel", "fair")),
        },
    ),
    "pvs": (
        _composite(lambda x, y, g, P: compose.p_variation_score(x, y, P["p"], g, estimator=P["estimator"])),
        {"p": Param(1.0, _pos), "estimator": Param("plugin", _choice("plugin", "unbiased"))},
    ),
    "as": (
        _composite(lambda x, y, g, P: compose.anisotropic_score(
            x, y, P["scales"], P["axes"], None, P["p"], g, P["estimator"])),
        {
            "scales": Param((1,), _scales, "list of positive integers"),
            "axes": Param("diagonal", _choice("diagonal", "grid")),
            "p": Param(2.0, _pos),
            "estimator": Param("plugin", _choice("plugin", "unbiased")),
        },
    ),
    "crps_mean": (
        _composite(lambda x, y, g, P: compose.crps_spatial_mean(
            x, y, int(P["s"]), g, int(P["stride"]), estimator=P["estimator"])),
        {
            "s": Param(REQUIRED, _posint, "patch size"),
            "stride": Param(1, _posint),
            "estimator": Param("kernel", _choice("kernel", "fair")),
        },
    ),
    "se_fte": (
        _composite(lambda x, y, g, P: compose.se_fte(
            x, y, int(P["s"]), P["t"], g, int(P["stride"]), estimator=P["estimator"])),
        {
            "s": Param(REQUIRED, _posint, "patch size"),
            "t": Param(REQUIRED, _real, "finite threshold"),
            "stride": Param(1, _posint),
            "estimator": Param("plugin", _choice("plugin", "unbiased")),
        },
    ),
    "twcrps": (_tw("crps"), dict(_TW_COMMON, estimator=Param("kernel", _choice("kernel", "fair")))),
    "twes": (_tw("es"), dict(_TW_COMMON, alpha=Param(1.0, _es_order), estimator=Param("kernel", _choice("kernel", "fair")))),
    "twvs": (_tw("vs"), dict(_TW_COMMON, p=Param(0.5, _pos))),
}
for _name in ("patched_es", "pvs", "as", "crps_mean", "se_fte"):
    COMPOSITE[_name][1].update(GRID_PARAMS)
MULTIVARIATE["vs"][1].update(GRID_PARAMS)


RULES: Dict[str, Rule] = {}
for _kind, _table in (
    ("univariate", UNIVARIATE),
    ("density", DENSITY),
    ("multivariate", MULTIVARIATE),
    ("composite", COMPOSITE),
):
    for _name, (_fn, _params) in _table.items():
        RULES[_name] = Rule(_name, _kind, _params, _fn)

ALIASES = {"hyvarinen": "hs", "energy": "es", "variogram": "vs", "brier": "bs", "pinball": "qs"}


def get(name) -> Rule:
    name = ALIASES.get(name, name)
    try:
        return RULES[name]
    except KeyError:
        raise ScoringError(f"unknown scoring rule {name!r}; known: {', '.join(sorted(RULES))}") from None


def resolved_parameters(rule) -> dict:
    """Rule parameters with defaults filled in, after validation."""
    r = get(rule.name)
    given = dict(rule.parameters)
    unknown = set(given) - set(r.params)
    if unknown:
        raise ScoringError(f"{r.name}: unknown parameter(s) {sorted(unknown)}")
    out = {}
    for key, spec in r.params.items():
        v = given.get(key, spec.default)
        if v is REQUIRED:
            raise ScoringError(f"{r.name}: missing parameter {key!r} ({spec.hint})")
        if v is not None:
            try:
                ok = spec.check(v)
            except (TypeError, ValueError):
                ok = False
            if not ok:
                hint = f" ({spec.hint})" if spec.hint else ""
                raise ScoringError(f"{r.name}: invalid {key}={v!r}{hint}")
        out[key] = v
    return out


def validate(rule):
    resolved_parameters(rule)


def input_dim(rule) -> Optional[int]:
    """Dimension a rule requires, or ``None`` if it accepts any."""
    r = get(rule.name)
    return 1 if r.name in ("quads", "pseudos") else r.dim


def evaluate(rule, forecast, obs) -> float:
    r = get(rule.name)
    P = getattr(rule, "_resolved", None)
    if P is None:
        P = resolved_parameters(rule)
    value = float(r.func(forecast, obs, P))
    if not math.isfinite(value):
        raise ScoringError(f"{r.name}: score is not finite")
    return value
