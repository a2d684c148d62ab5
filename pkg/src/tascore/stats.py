"""Comparing score series: Diebold-Mariano tests and repetition summaries."""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .core import ScoreSeries, ScoringError

LEVEL = 0.05


@dataclass(frozen=True)
class ComparisonResult:
    """Outcome of a paired test of A against B.

    ``better`` is ``"A"`` when A has significantly lower scores, ``"B"`` when
    B has, and ``"tie"`` otherwise.
    """

    dm_statistic: float
    p_value: float
    n: int
    better: str
    mean_difference: float = 0.0

    @property
    def significant(self):
        return self.better != "tie"


def _values(s):
    return np.asarray(getattr(s, "values", s), dtype=np.float64).reshape(-1)


def dm_test(a, b, level=LEVEL) -> ComparisonResult:
    """Two-sided Diebold-Mariano test on the paired differences ``d = a - b``.

    Statistic ``mean(d) / sqrt(var(d) / n)`` with the ``n - 1`` variance and a
    standard normal reference. No autocorrelation correction is applied, so
    the observations behind the series should be independent.
    """
    a, b = _values(a), _values(b)
    if a.size != b.size:
        raise ScoringError(f"series lengths differ: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ScoringError("the test needs at least two paired scores")
    d = a - b
    mean = float(np.mean(d))
    var = float(np.var(d, ddof=1))
    if var <= 0 or not math.isfinite(var):
        if mean == 0:
            stat, p = 0.0, 1.0
        else:
            stat, p = math.copysign(math.inf, mean), 0.0
    else:
        stat = mean / math.sqrt(var / n)
        p = float(min(1.0, 2.0 * special.ndtr(-abs(stat))))
    if p < level:
        better = "A" if stat < 0 else "B"
    else:
        better = "tie"
    return ComparisonResult(stat, p, n, better, mean)


def standard_error(values) -> float:
    v = _values(values)
    if v.size < 2:
        return 0.0
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    std_error: float
    rescaled_mean: float
    repetition_means: tuple

    @property
    def rescaled_std_error(self):
        return self.std_error * self.rescaled_mean / self.mean if self.mean != 0 else float("nan")


def summarize(series_per_rep: Sequence, ideal_mean: float) -> ScoreSummary:
    """Pool repetitions: overall mean, its standard error, the mean divided by
    ``ideal_mean`` and the per-repetition means."""
    reps = [_values(s) for s in series_per_rep]
    if not reps or any(r.size == 0 for r in reps):
        raise ScoringError("need at least one nonempty repetition")
    if ideal_mean == 0 or not math.isfinite(ideal_mean):
        raise ScoringError("ideal mean must be finite and nonzero for rescaling")
    pooled = np.concatenate(reps)
    mean = float(np.mean(pooled))
    return ScoreSummary(
        mean=mean,
        std_error=standard_error(pooled),
        rescaled_mean=mean / ideal_mean,
        repetition_means=tuple(float(np.mean(r)) for r in reps),
    )


def pooled(series: Sequence[ScoreSeries]) -> np.ndarray:
    return np.concatenate([_values(s) for s in series])
