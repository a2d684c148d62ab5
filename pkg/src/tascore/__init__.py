"""Proper scoring rules for multivariate forecasts built by transformation and aggregation."""

from .core import (
    EnsembleForecast,
    GridDomain,
    Observation,
    ScoreSeries,
    ScoringError,
    ScoringRuleSpec,
    evaluate,
    evaluate_series,
)

__version__ = "0.1.0"

__all__ = [
    "EnsembleForecast",
    "GridDomain",
    "Observation",
    "ScoreSeries",
    "ScoringError",
    "ScoringRuleSpec",
    "evaluate",
    "evaluate_series",
]
