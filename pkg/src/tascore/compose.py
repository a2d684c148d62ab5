"""Scores built by transformation and aggregation.

A proper score ``S`` on ``R^k`` composed with a transformation ``T: R^d -> R^k``
gives ``S_T(F, y) = S(T(F), T(y))``, proper relative to any class whose image
under ``T`` is in the class of ``S``. Nonnegative weighted sums of proper
scores are proper again. Both constructions live here, together with the
named composites used in the spatial experiments.

Composite functions take ensembles as ``(M, d)`` arrays (or
:class:`EnsembleForecast`) with fields flattened row-major on ``grid``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .core import EnsembleForecast, GridDomain, ScoringError, ScoringRuleSpec
from .transforms import (
    Transformation,
    chaining,
    isotropy_values,
    p_variation_values,
    patch_index_matrix,
    square_patches,
)
from .univariate import crps_ensemble


# -- lifting and aggregation ------------------------------------------------------


def _members(f):
    m = np.asarray(getattr(f, "members", f), dtype=np.float64)
    return m[:, None] if m.ndim == 1 else m


def _obs(y):
    return np.asarray(getattr(y, "values", y), dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class LiftedScore:
    """``S_T``: the base rule applied to transformed members and observation."""

    base: ScoringRuleSpec
    transform: Transformation

    def __post_init__(self):
        from .catalog import input_dim

        need = input_dim(self.base)
        k = self.transform.output_dim
        if need is not None and k is not None and need != k:
            raise ScoringError(
                f"{self.base.name} expects dimension {need}, {self.transform.name} gives {k}"
            )

    @property
    def name(self):
        return f"{self.base.name}[{self.transform.name}]"

    def evaluate(self, forecast, obs):
        from .catalog import evaluate

        tx = self.transform.apply(_members(forecast))
        ty = self.transform.apply(_obs(obs))
        return evaluate(self.base, EnsembleForecast(tx), ty)

    __call__ = evaluate


def lift(base, transform) -> LiftedScore:
    if not isinstance(base, ScoringRuleSpec):
        base = ScoringRuleSpec(str(base))
    return LiftedScore(base, transform)


def _evaluate_term(score, forecast, obs):
    if isinstance(score, LiftedScore):
        return score.evaluate(forecast, obs)
    if isinstance(score, ScoringRuleSpec):
        from .catalog import evaluate

        return evaluate(score, forecast, obs)
    if callable(score):
        return score(forecast, obs)
    raise ScoringError(f"cannot evaluate aggregation term {score!r}")


@dataclass(frozen=True)
class Aggregation:
    """Weighted sum ``sum_i w_i S_i`` with ``w_i >= 0``."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((s, float(w)) for s, w in self.terms)
        if not terms:
            raise ScoringError("aggregation needs at least one term")
        for i, (_, w) in enumerate(terms):
            if not (w >= 0 and math.isfinite(w)):
                raise ScoringError(f"term {i}: weight must be finite and nonnegative")
        object.__setattr__(self, "terms", terms)

    def scaled(self, c):
        return Aggregation(tuple((s, c * w) for s, w in self.terms))


def aggregate(agg: Aggregation, forecast, obs) -> float:
    """Evaluate every term with nonzero weight and sum in term order."""
    vals = np.zeros(len(agg.terms))
    for i, (score, w) in enumerate(agg.terms):
        if w == 0:
            continue
        try:
            vals[i] = w * _evaluate_term(score, forecast, obs)
        except ScoringError as exc:
            raise ScoringError(f"aggregation term {i}: {exc}") from exc
    return float(np.sum(vals))


# -- helpers for composites ------------------------------------------------------


def resolve_grid(d, grid=None) -> GridDomain:
    """``grid`` if given, otherwise the square grid with ``d`` sites."""
    if grid is not None:
        if grid.d != d:
            raise ScoringError(f"grid has {grid.d} sites, data has {d}")
        return grid
    n = math.isqrt(d)
    if n * n != d:
        raise ScoringError(f"cannot infer a square grid for d={d}; pass grid")
    return GridDomain(n, n)


def _uniform_or(weights, n, what):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != n:
        raise ScoringError(f"{what}: expected {n} weights, got {w.size}")
    if np.any(w < 0):
        raise ScoringError(f"{what}: weights must be nonnegative")
    return w


def se_of_expectation(tx, ty, weights=None, estimator="plugin"):
    """``sum_k w_k (mean_m tx[m, k] - ty[k])^2``.

    ``estimator="unbiased"`` subtracts the sampling variance of the ensemble
    mean, giving an unbiased estimate of the score of the generating
    distribution.
    """
    tx = np.asarray(tx, dtype=np.float64)
    tx = tx.reshape(tx.shape[0], -1)
    ty = np.asarray(ty, dtype=np.float64).reshape(-1)
    M = tx.shape[0]
    w = _uniform_or(weights, ty.size, "se_of_expectation")
    e = tx.mean(axis=0)
    sq = (e - ty) ** 2
    if estimator == "unbiased":
        if M < 2:
            raise ScoringError("unbiased estimator needs at least two members")
        sq = sq - tx.var(axis=0, ddof=1) / M
    elif estimator != "plugin":
        raise ScoringError(f"unknown estimator {estimator!r}")
    return float(np.dot(w, sq))


# -- patched energy score -------------------------------------------------------


def patched_energy_scores(f, y, sizes, alpha=1.0, grid=None, stride=1, estimator="kernel", weights=None):
    """Patched ES for several patch sizes at once; returns ``{size: score}``.

    One pass over the member pairs serves all sizes.
    """
    if not 0 < alpha < 2:
        raise ScoringError("energy score order must lie in (0, 2)")
    x = _members(f)
    y = _obs(y)
    M, d = x.shape
    grid = resolve_grid(d, grid)
    sizes = [int(s) for s in sizes]
    for s in sizes:
        if not 1 <= s <= min(grid.width, grid.height):
            raise ScoringError(f"patch size {s} does not fit a {grid.height}x{grid.width} grid")
    if estimator == "kernel":
        denom = M * M
    elif estimator == "fair":
        if M < 2:
            raise ScoringError("fair energy score needs at least two members")
        denom = M * (M - 1)
    else:
        raise ScoringError(f"unknown estimator {estimator!r}")
    H, W = grid.shape
    terms = _kernels.patch_energy_terms(x.reshape(M, H, W), y.reshape(H, W), sizes, stride, alpha)
    out = {}
    for s, (obs, pairs) in zip(sizes, terms):
        es = obs - pairs / denom
        out[s] = float(np.dot(_uniform_or(weights, es.size, "patch weights"), es))
    return out


def patched_energy_score(f, y, s, alpha=1.0, grid=None, stride=1, estimator="kernel", weights=None):
    """Average energy score over all ``s x s`` patches.

    ``s = 1`` gives the mean per-site kernel CRPS; a patch covering the whole
    grid gives the plain energy score.
    """
    return patched_energy_scores(f, y, [s], alpha, grid, stride, estimator, weights)[int(s)]


# -- p-variation and anisotropic scores ----------------------------------------------


def p_variation_score(f, y, p=1.0, grid=None, site_weights=None, estimator="plugin"):
    """``sum_s w_s (E_F T_s(X) - T_s(y))^2`` over the unit cells of the grid,
    ``T_s`` the p-variation of the cell anchored at ``s``. Uniform weights by
    default."""
    if not p > 0:
        raise ScoringError("p must be positive")
    x = _members(f)
    y = _obs(y)
    grid = resolve_grid(x.shape[1], grid)
    if grid.width < 2 or grid.height < 2:
        raise ScoringError("p-variation needs at least a 2x2 grid")
    tx = p_variation_values(grid.as_fields(x), p)
    ty = p_variation_values(grid.as_fields(y), p)
    return se_of_expectation(tx, ty, site_weights, estimator)


def anisotropic_score(
    f, y, scales=(1,), axes="diagonal", scale_weights=None, p=2.0, grid=None, estimator="plugin"
):
    """``sum_h w_h (E_F T_iso,h(X) - T_iso,h(y))^2``; ``w_h = 1/h`` by default."""
    scales = [int(h) for h in np.atleast_1d(scales)]
    if not scales:
        raise ScoringError("anisotropic score needs at least one scale")
    x = _members(f)
    y = _obs(y)
    grid = resolve_grid(x.shape[1], grid)
    if scale_weights is None:
        w = np.array([1.0 / h for h in scales])
    else:
        w = _uniform_or(scale_weights, len(scales), "scale weights")
    # members and observation in one pass: the last row is y
    fields = grid.as_fields(np.vstack([x, y[None]]))
    t = np.stack([isotropy_values(fields, grid, h, axes, p) for h in scales], axis=-1)
    return se_of_expectation(t[:-1], t[-1], w, estimator)


# -- double-penalty robust composites ----------------------------------------------


@lru_cache(maxsize=64)
def _patch_index(grid, s, stride):
    idx = patch_index_matrix(square_patches(grid, int(s), int(stride)))
    idx.setflags(write=False)
    return idx


def crps_spatial_mean(f, y, s, grid=None, stride=1, weights=None, estimator="kernel"):
    """Mean over patches of the CRPS of the patch mean (kernel estimator by default).

    ``s = 1`` gives the aggregated per-site CRPS.
    """
    x = _members(f)
    y = _obs(y)
    grid = resolve_grid(x.shape[1], grid)
    idx = _patch_index(grid, s, stride)
    mx = x[:, idx].mean(axis=-1)
    my = y[idx].mean(axis=-1)
    c = crps_ensemble(mx, my, estimator)
    return float(np.dot(_uniform_or(weights, c.size, "patch weights"), c))


def se_fte(f, y, s, t, grid=None, stride=1, weights=None, estimator="plugin"):
    """Mean over patches of ``(E_F FTE_P(X) - FTE_P(y))^2``.

    ``s = 1`` gives the aggregated Brier score at threshold ``t`` (up to ties
    at ``t``).
    """
    x = _members(f)
    y = _obs(y)
    grid = resolve_grid(x.shape[1], grid)
    idx = _patch_index(grid, s, stride)
    tx = np.mean(x[:, idx] >= t, axis=-1)
    ty = np.mean(y[idx] >= t, axis=-1)
    return se_of_expectation(tx, ty, weights, estimator)


# -- threshold weighting -------------------------------------------------------------


TW_BASES = ("crps", "es", "vs")


def threshold_weighted(base: Union[str, ScoringRuleSpec], v="threshold_clamp", t=None) -> LiftedScore:
    """``twS(F, y; v) = S(v(F), v(y))`` for a kernel score ``S``.

    ``v`` is a chaining name (with threshold ``t``), a callable or a
    :class:`Transformation`.
    """
    if not isinstance(base, ScoringRuleSpec):
        base = ScoringRuleSpec(str(base))
    if base.name not in TW_BASES:
        raise ScoringError(f"threshold weighting applies to {TW_BASES}, not {base.name!r}")
    transform = v if isinstance(v, Transformation) else chaining(v, t)
    return LiftedScore(base, transform)


def aggregated_univariate(terms: Sequence, d):
    """Aggregation of one univariate rule per site with weights ``1/d``."""
    from .transforms import projection

    return Aggregation(tuple((lift(r, projection([i + 1], d)), 1.0 / d) for i, r in enumerate(terms)))
