"""Shared data model: grids, forecasts, observations and score outputs.

Sites are addressed as ``(row, col)`` with 1-based coordinates. Flat indices
are row-major starting at site ``(1, 1)``; the public flat index of a site is
1-based as well, while arrays are indexed from 0 internally.
"""

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ScoringError(ValueError):
    """Invalid input to a scoring rule (dimension, parameter or forecast type)."""


def _frozen(a, dtype=np.float64, ndim=None, name="array"):
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ScoringError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridDomain:
    """Regular ``height x width`` grid of sites."""

    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ScoringError("grid width and height must be >= 1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def square(cls, n):
        return cls(n, n)

    @property
    def d(self) -> int:
        return self.width * self.height

    @property
    def shape(self):
        """Array shape ``(height, width)`` of a field on this grid."""
        return (self.height, self.width)

    def contains(self, row, col) -> bool:
        return 1 <= row <= self.height and 1 <= col <= self.width

    def flatten(self, site) -> int:
        """1-based flat index of site ``(row, col)``."""
        row, col = site
        if not self.contains(row, col):
            raise ScoringError(f"site {site} outside {self.height}x{self.width} grid")
        return (row - 1) * self.width + col

    def unflatten(self, index) -> tuple:
        """Site ``(row, col)`` of a 1-based flat index."""
        if not 1 <= index <= self.d:
            raise ScoringError(f"flat index {index} outside 1..{self.d}")
        r, c = divmod(index - 1, self.width)
        return (r + 1, c + 1)

    def coords(self) -> np.ndarray:
        """``(d, 2)`` array of 1-based ``(row, col)`` coordinates in flat order."""
        rows, cols = np.divmod(np.arange(self.d), self.width)
        return np.column_stack([rows + 1, cols + 1]).astype(np.float64)

    def as_fields(self, x) -> np.ndarray:
        """Reshape ``(..., d)`` vectors to ``(..., height, width)`` fields."""
        x = np.asarray(x)
        if x.shape[-1] != self.d:
            raise ScoringError(f"expected last dimension {self.d}, got {x.shape[-1]}")
        return x.reshape(x.shape[:-1] + self.shape)


@dataclass(frozen=True)
class Observation:
    """A single observed field, flattened row-major."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, ndim=1, name="observation")
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ScoringError("observation must be nonempty and finite")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EnsembleForecast:
    """Equally weighted ensemble; ``members`` has shape ``(M, d)``."""

    members: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        m = _frozen(m, ndim=2, name="members")
        if m.shape[0] < 1 or m.shape[1] < 1:
            raise ScoringError("ensemble needs at least one member and one dimension")
        if not np.all(np.isfinite(m)):
            raise ScoringError("ensemble members must be finite")
        object.__setattr__(self, "members", m)

    @property
    def M(self) -> int:
        return self.members.shape[0]

    @property
    def d(self) -> int:
        return self.members.shape[1]

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)


@dataclass(frozen=True)
class ScoreSeries:
    """Per-observation scores of one forecast under one rule."""

    score_name: str
    forecast_name: str
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, ndim=1, name="score series")
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ScoringError("score series must be nonempty and finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class ScoringRuleSpec:
    """A named scoring rule plus its parameters, e.g. ``("qs", {"alpha": 0.9})``."""

    name: str
    parameters: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "name", str(self.name).lower())
        object.__setattr__(self, "parameters", dict(self.parameters))
        from .catalog import resolved_parameters

        object.__setattr__(self, "_resolved", resolved_parameters(self))

    def param(self, key, default=None):
        return self.parameters.get(key, default)


def evaluate(rule: ScoringRuleSpec, forecast, obs) -> float:
    """Score ``forecast`` against ``obs`` (negative orientation)."""
    from .catalog import evaluate as _evaluate

    return _evaluate(rule, forecast, obs)


def evaluate_series(rule: ScoringRuleSpec, forecast_source, observations, forecast_name="forecast"):
    """Score a sequence of observations.

    ``forecast_source`` is either a single forecast used for every observation
    or a sequence/callable giving the forecast for observation ``i``.
    """
    observations = list(observations)
    dims = {np.asarray(getattr(o, "values", o)).reshape(-1).shape[0] for o in observations}
    if len(dims) > 1:
        raise ScoringError("observations do not share one grid")
    out = np.empty(len(observations))
    for i, y in enumerate(observations):
        if callable(forecast_source):
            f = forecast_source(i)
        elif isinstance(forecast_source, (list, tuple)):
            f = forecast_source[i]
        else:
            f = forecast_source
        try:
            out[i] = evaluate(rule, f, y)
        except ScoringError as exc:
            raise ScoringError(f"observation {i}: {exc}") from exc
    return ScoreSeries(rule.name, forecast_name, out)


# -- CSV exchange format ------------------------------------------------------


def _header(d):
    return [f"v{i}" for i in range(1, d + 1)]


def write_matrix_csv(path, rows):
    """Write an ``(n, d)`` array with header ``v1..vd``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(rows.shape[1]))
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def read_matrix_csv(path) -> np.ndarray:
    """Read an ``(n, d)`` array written by :func:`write_matrix_csv`.

    Errors name the offending line (1-based, header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScoringError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != _header(len(header)):
            raise ScoringError(f"{path}: line 1: header must be v1..vd")
        d = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d:
                raise ScoringError(f"{path}: line {lineno}: expected {d} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ScoringError(f"{path}: line {lineno}: non-numeric field") from None
            if not all(np.isfinite(vals)):
                raise ScoringError(f"{path}: line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise ScoringError(f"{path}: no data rows")
    return np.array(rows)


def read_ensemble(path) -> EnsembleForecast:
    return EnsembleForecast(read_matrix_csv(path))


def read_observations(path) -> Sequence[Observation]:
    return [Observation(r) for r in read_matrix_csv(path)]
