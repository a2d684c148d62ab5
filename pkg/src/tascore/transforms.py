"""Transformations of fields into low-dimensional summaries.

A :class:`Transformation` maps ``(..., d)`` arrays to ``(..., k)`` arrays, so
the same object transforms a single observation or every member of an
ensemble at once. Public site and flat indices are 1-based; lag vectors are
``h = (d_row, d_col)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .core import GridDomain, ScoringError


@dataclass(frozen=True)
class Transformation:
    name: str
    input_dim: Optional[int]
    output_dim: Optional[int]
    func: Callable = field(repr=False, compare=False)

    def __call__(self, x):
        return self.apply(x)

    def apply(self, x):
        x = np.asarray(getattr(x, "values", getattr(x, "members", x)), dtype=np.float64)
        if self.input_dim is not None and x.shape[-1] != self.input_dim:
            raise ScoringError(
                f"{self.name}: expected input dimension {self.input_dim}, got {x.shape[-1]}"
            )
        out = np.asarray(self.func(x), dtype=np.float64)
        k = x.shape[-1] if self.output_dim is None else self.output_dim
        return out.reshape(x.shape[:-1] + (k,))


def identity(d=None):
    return Transformation("identity", d, d, lambda x: x)


# -- patches -------------------------------------------------------------------


@dataclass(frozen=True)
class Patch:
    """An ordered set of grid sites (1-based flat indices)."""

    sites: Tuple[int, ...]
    grid: GridDomain
    side: Optional[int] = None
    anchor: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        s = tuple(int(i) for i in self.sites)
        if not s:
            raise ScoringError("patch must be nonempty")
        if len(set(s)) != len(s):
            raise ScoringError("patch sites must be distinct")
        if min(s) < 1 or max(s) > self.grid.d:
            raise ScoringError("patch site outside the grid")
        object.__setattr__(self, "sites", s)

    @classmethod
    def square(cls, grid, side, anchor=(1, 1)):
        r0, c0 = anchor
        if not (grid.contains(r0, c0) and grid.contains(r0 + side - 1, c0 + side - 1)):
            raise ScoringError(f"{side}x{side} patch at {anchor} does not fit the grid")
        sites = [grid.flatten((r, c)) for r in range(r0, r0 + side) for c in range(c0, c0 + side)]
        return cls(tuple(sites), grid, side, (r0, c0))

    @classmethod
    def full(cls, grid):
        return cls(tuple(range(1, grid.d + 1)), grid)

    def __len__(self):
        return len(self.sites)

    @property
    def index(self) -> np.ndarray:
        """0-based flat indices."""
        return np.asarray(self.sites) - 1


def square_patches(grid, size, stride=1):
    """All ``size x size`` patches with full support, row-major by anchor."""
    if not 1 <= size <= min(grid.width, grid.height):
        raise ScoringError(f"patch size {size} does not fit a {grid.height}x{grid.width} grid")
    if stride < 1:
        raise ScoringError("stride must be >= 1")
    return [
        Patch.square(grid, size, (r, c))
        for r in range(1, grid.height - size + 2, stride)
        for c in range(1, grid.width - size + 2, stride)
    ]


def patch_index_matrix(patches) -> np.ndarray:
    """``(n_patches, |P|)`` array of 0-based indices for equal-size patches."""
    return np.array([p.index for p in patches])


# -- projections and patch statistics ---------------------------------------------


def projection(indices, d=None):
    """``T(x) = (x_i1, ..., x_ik)`` for 1-based flat indices."""
    idx = np.asarray(indices, dtype=int).reshape(-1)
    if idx.size == 0 or len(set(idx.tolist())) != idx.size:
        raise ScoringError("projection needs distinct indices")
    if idx.min() < 1 or (d is not None and idx.max() > d):
        raise ScoringError("projection index out of range")
    zero = idx - 1

    def f(x):
        if idx.max() > x.shape[-1]:
            raise ScoringError("projection index out of range")
        return x[..., zero]

    return Transformation(f"projection{tuple(idx.tolist())}", d, idx.size, f)


def _central_moment(v, n):
    c = v - v.mean(axis=-1, keepdims=True)
    return np.mean(c**n, axis=-1)


def _stat_func(stat, n):
    if stat == "mean":
        return lambda v: v.mean(axis=-1)
    if stat == "total":
        return lambda v: v.sum(axis=-1)
    if stat == "min":
        return lambda v: v.min(axis=-1)
    if stat == "max":
        return lambda v: v.max(axis=-1)
    if stat == "variance":
        return lambda v: _central_moment(v, 2)
    if stat == "moment":
        if n is None or n < 1:
            raise ScoringError("moment statistic needs order n >= 1")
        return lambda v: np.mean(v**n, axis=-1)
    if stat in ("skewness", "kurtosis"):
        k = 3 if stat == "skewness" else 4

        def standardized(v):
            var = _central_moment(v, 2)
            with np.errstate(invalid="ignore", divide="ignore"):
                out = _central_moment(v, k) / var ** (k / 2)
            return np.where(var > 0, out, 0.0)

        return standardized
    raise ScoringError(f"unknown patch statistic {stat!r}")


def patch_statistic(patch, stat="mean", n=None):
    """Scalar summary of the values in a patch.

    ``stat`` is one of mean, total, min, max, variance (1/|P| normalizer),
    moment (raw moment of order ``n``), skewness or kurtosis (biased).
    """
    fn = _stat_func(stat, n)
    idx = patch.index
    return Transformation(f"{stat}_P", patch.grid.d, 1, lambda x: fn(x[..., idx]))


def fte(patch, t):
    """Fraction of sites in the patch with ``x_i >= t``."""
    idx = patch.index
    return Transformation(f"fte_P(t={t})", patch.grid.d, 1, lambda x: np.mean(x[..., idx] >= t, axis=-1))


# -- variograms ------------------------------------------------------------


def variogram_pair(i, j, p=1.0, d=None):
    """``|x_i - x_j|^p`` for 1-based flat indices."""
    if not p > 0:
        raise ScoringError("variogram order must be positive")
    a, b = int(i) - 1, int(j) - 1
    if a < 0 or b < 0:
        raise ScoringError("site index out of range")
    return Transformation(f"gamma_{i},{j}", d, 1, lambda x: np.abs(x[..., a] - x[..., b]) ** p)


def lag_overlap(grid, h):
    """Slices selecting ``D(h)`` and ``D(h) + h`` on ``(height, width)`` fields."""
    dr, dc = int(h[0]), int(h[1])
    H, W = grid.shape
    if abs(dr) >= H or abs(dc) >= W:
        raise ScoringError(f"lag {h} leaves no admissible pairs on a {H}x{W} grid")
    r0, r1 = (slice(0, H - dr), slice(dr, H)) if dr >= 0 else (slice(-dr, H), slice(0, H + dr))
    c0, c1 = (slice(0, W - dc), slice(dc, W)) if dc >= 0 else (slice(-dc, W), slice(0, W + dc))
    return (r0, c0), (r1, c1), (H - abs(dr)) * (W - abs(dc))


def _directed(fields, grid, h, p):
    (a, b), (c, e), n = lag_overlap(grid, h)
    diff = fields[..., c, e] - fields[..., a, b]
    v = diff * diff if p == 2 else np.abs(diff) ** p
    return np.sum(v, axis=(-2, -1)) / (2.0 * n), n


def directed_variogram_values(fields, grid, h, p=2.0):
    """``gamma_X(h) = 1/(2|D(h)|) sum_{i in D(h)} |X_{i+h} - X_i|^p`` on ``(..., H, W)``."""
    return _directed(fields, grid, h, p)[0]


def directed_variogram(grid, h, p=2.0):
    if not p > 0:
        raise ScoringError("variogram order must be positive")
    lag_overlap(grid, h)
    return Transformation(
        f"gamma(h={tuple(h)})", grid.d, 1, lambda x: directed_variogram_values(grid.as_fields(x), grid, h, p)
    )


def isotropy_axes(h, axes="grid"):
    if h < 1:
        raise ScoringError("isotropy scale must be a positive integer")
    if axes == "grid":
        return (h, 0), (0, h)
    if axes == "diagonal":
        return (h, h), (-h, h)
    raise ScoringError(f"unknown axes {axes!r}")


def isotropy_values(fields, grid, h, axes="grid", p=2.0):
    """Isotropy statistic on ``(..., H, W)`` fields; 0 where both variograms vanish."""
    h1, h2 = isotropy_axes(h, axes)
    g1, n1 = _directed(fields, grid, h1, p)
    g2, n2 = _directed(fields, grid, h2, p)
    den = 2.0 * g1 * g1 / n1 + 2.0 * g2 * g2 / n2
    num = (g1 - g2) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = -num / den
    return np.where(den > 0, out, 0.0)


def isotropy_statistic(grid, h, axes="grid", p=2.0):
    """Negative normalized squared difference of directed variograms at scale ``h``.

    ``axes="grid"`` compares lags ``(h, 0)`` and ``(0, h)``; ``"diagonal"``
    compares ``(h, h)`` and ``(-h, h)``.
    """
    for lag in isotropy_axes(h, axes):
        lag_overlap(grid, lag)
    return Transformation(
        f"iso(h={h},{axes})", grid.d, 1, lambda x: isotropy_values(grid.as_fields(x), grid, h, axes, p)
    )


def p_variation_values(fields, p=1.0):
    """``|X_{s+(1,1)} - X_{s+(1,0)} - X_{s+(0,1)} + X_s|^p`` for every cell; ``(..., H-1, W-1)``."""
    z = fields[..., 1:, 1:] - fields[..., 1:, :-1] - fields[..., :-1, 1:] + fields[..., :-1, :-1]
    return np.abs(z) ** p


def p_variation_cell(grid, site, p=1.0):
    """p-variation of the unit cell anchored at ``site = (row, col)``."""
    if not p > 0:
        raise ScoringError("p must be positive")
    r, c = site
    if not (grid.contains(r, c) and grid.contains(r + 1, c + 1)):
        raise ScoringError(f"cell at {site} has a corner outside the grid")
    i00 = grid.flatten((r, c)) - 1
    i10 = grid.flatten((r + 1, c)) - 1
    i01 = grid.flatten((r, c + 1)) - 1
    i11 = grid.flatten((r + 1, c + 1)) - 1

    def f(x):
        return np.abs(x[..., i11] - x[..., i10] - x[..., i01] + x[..., i00]) ** p

    return Transformation(f"pvar{tuple(site)}", grid.d, 1, f)


# -- chaining functions ------------------------------------------------------------


def chaining(v="identity", t=None, d=None):
    """Componentwise map ``x -> (v(x_1), ..., v(x_d))``.

    ``v`` is ``"identity"``, ``"threshold_clamp"`` (``max(x, t)``),
    ``"indicator"`` (``1{x >= t}``) or a vectorized callable.
    """
    if callable(v):
        fn, name = v, getattr(v, "__name__", "custom")
    elif v == "identity":
        fn, name = (lambda x: x), "identity"
    elif v == "threshold_clamp":
        fn, name = (lambda x: np.maximum(x, t)), f"clamp(t={t})"
    elif v == "indicator":
        fn, name = (lambda x: (x >= t).astype(np.float64)), f"indicator(t={t})"
    else:
        raise ScoringError(f"unknown chaining function {v!r}")
    if v in ("threshold_clamp", "indicator") and t is None:
        raise ScoringError(f"{v} needs a threshold t")
    return Transformation(f"chain[{name}]", d, d, fn)
