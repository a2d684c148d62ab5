"""Kernel scores and their expansion as sums of squared errors.

For a kernel ``rho(x1, x2) = sum_l T_l(x1) T_l(x2)`` the kernel score
``1/2 (E rho(X, X') - 2 E rho(X, y) + rho(y, y))`` equals
``1/2 sum_l (E T_l(X) - T_l(y))^2``. Two bases are provided:

* ``gaussian``: ``T_l(x) = x^l exp(-x^2/2) / sqrt(l!)`` for the Gaussian
  kernel ``exp(-(x1 - x2)^2 / 2)``;
* ``crps``: primitives of the Haar system, plateaus ``T0(x - l)`` and
  triangles ``2^{-m/2} T1(2^m x - l)``. They are orthonormal for the
  Brownian-motion covariance, which is half the CRPS kernel
  ``|x1| + |x2| - |x1 - x2|``, so this series carries no 1/2 factor.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ScoringError
from .univariate import UnivariateEnsemble, crps_ensemble


@dataclass(frozen=True)
class Kernel:
    name: str

    def __post_init__(self):
        if self.name not in ("gaussian", "crps"):
            raise ScoringError(f"unknown kernel {self.name!r}")

    def evaluate(self, x1, x2):
        x1 = np.asarray(x1, dtype=np.float64)
        x2 = np.asarray(x2, dtype=np.float64)
        if self.name == "gaussian":
            return np.exp(-0.5 * (x1 - x2) ** 2)
        return np.abs(x1) + np.abs(x2) - np.abs(x1 - x2)

    __call__ = evaluate

    def gram(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return self.evaluate(x[:, None], x[None, :])


GAUSSIAN = Kernel("gaussian")
CRPS = Kernel("crps")


def _as_kernel(k):
    return k if isinstance(k, Kernel) else Kernel(str(k))


def _samples(f):
    if isinstance(f, UnivariateEnsemble):
        return f.samples
    s = np.asarray(f, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ScoringError("ensemble must be nonempty")
    return s


def kernel_score(k, f, y, estimator="kernel"):
    """Nonnegative kernel score of an ensemble.

    For the CRPS kernel the ``|x|`` terms cancel analytically and the score is
    evaluated as ``E|X - y| - 1/2 E|X - X'|``, i.e. exactly
    :func:`crps_ensemble`. ``estimator="fair"`` drops the ``m = k`` terms from
    the ensemble double sum.
    """
    k = _as_kernel(k)
    x = _samples(f)
    y = float(y)
    if k.name == "crps":
        return float(crps_ensemble(x, y, estimator))
    M = x.size
    g = k.gram(x)
    if estimator == "kernel":
        pair = g.sum() / (M * M)
    elif estimator == "fair":
        if M < 2:
            raise ScoringError("fair estimator needs at least two members")
        pair = (g.sum() - np.trace(g)) / (M * (M - 1))
    else:
        raise ScoringError(f"unknown estimator {estimator!r}")
    return float(0.5 * (pair - 2.0 * np.mean(k.evaluate(x, y)) + k.evaluate(y, y)))


# -- bases -------------------------------------------------------------


def plateau(x):
    """``T0(x) = x on [0, 1), 1 for x >= 1, 0 below``."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(x, 0.0, 1.0)


def triangle(x):
    """``T1(x) = 1/2 - |x - 1/2|`` on ``[0, 1]``, zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    return np.where((x >= 0) & (x <= 1), 0.5 - np.abs(x - 0.5), 0.0)


def gaussian_basis(x, L):
    """``(L + 1, n)`` array of ``T_l(x)`` for ``l = 0..L``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    out = np.empty((L + 1, x.size))
    out[0] = np.exp(-0.5 * x * x)
    for l in range(1, L + 1):
        out[l] = out[l - 1] * x / math.sqrt(l)
    return out


@dataclass(frozen=True)
class BasisFunction:
    """A basis element: ``("gaussian", l)``, ``("plateau", l)`` or ``("triangle", l, m)``."""

    kind: str
    l: int
    m: Optional[int] = None

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "gaussian":
            return np.exp(-0.5 * x * x) * x**self.l / math.sqrt(math.factorial(self.l))
        if self.kind == "plateau":
            return plateau(x - self.l)
        if self.kind == "triangle":
            return 2.0 ** (-self.m / 2) * triangle(2.0**self.m * x - self.l)
        raise ScoringError(f"unknown basis kind {self.kind!r}")

    @property
    def id(self):
        return (self.kind, self.l) if self.m is None else (self.kind, self.l, self.m)


@dataclass(frozen=True)
class TruncationSpec:
    """Where to cut the infinite series.

    ``L`` is the last Gaussian index. For the Haar-type basis, plateaus cover
    positions ``l_min..l_max - 1`` and triangles at scale ``m`` cover
    ``[l_min, l_max]``; ``None`` bounds default to ``[floor(min) - 1,
    ceil(max) + 1]`` of the inputs.
    """

    L: int = 30
    l_min: Optional[int] = None
    l_max: Optional[int] = None
    m_max: int = 12

    def __post_init__(self):
        if self.L < 1:
            raise ScoringError("L must be >= 1")
        if self.m_max < 0:
            raise ScoringError("m_max must be >= 0")
        if self.l_min is not None and self.l_max is not None and self.l_min > self.l_max:
            raise ScoringError("l_min must not exceed l_max")

    def haar_range(self, values):
        lo = self.l_min if self.l_min is not None else math.floor(np.min(values)) - 1
        hi = self.l_max if self.l_max is not None else math.ceil(np.max(values)) + 1
        if lo > hi:
            raise ScoringError("empty Haar position range")
        return int(lo), int(hi)


def _gaussian_terms(x, y, L):
    ex = gaussian_basis(x, L).mean(axis=1)
    ty = gaussian_basis([y], L)[:, 0]
    return 0.5 * (ex - ty) ** 2


def _haar_levels(x, y, lo, hi, m_max):
    """Yield ``(kind, m, positions, contributions)`` per level."""
    M = x.size
    pos = np.arange(lo, hi)
    ex = plateau(x[None, :] - pos[:, None]).mean(axis=1)
    yield "plateau", None, pos, (ex - plateau(y - pos)) ** 2
    for m in range(m_max + 1):
        scale = 2.0**m
        n = (hi - lo) * (1 << m)
        base = lo * (1 << m)

        def coeffs(v):
            u = scale * v
            k = np.floor(u).astype(np.int64)
            val = 2.0 ** (-m / 2) * triangle(u - k)
            ok = (k >= base) & (k < base + n)
            return k[ok] - base, val[ok]

        kx, vx = coeffs(x)
        ex = np.bincount(kx, weights=vx, minlength=n) / M
        ky, vy = coeffs(np.array([y]))
        ty = np.zeros(n)
        ty[ky] = vy
        yield "triangle", m, np.arange(base, base + n), (ex - ty) ** 2


def series_contributions(k, f, y, trunc=None):
    """Per-basis-function contributions ``(id, value)``; they sum to :func:`series_score`."""
    k = _as_kernel(k)
    trunc = trunc or TruncationSpec()
    x = _samples(f)
    y = float(y)
    if k.name == "gaussian":
        terms = _gaussian_terms(x, y, trunc.L)
        return [(("gaussian", l), float(c)) for l, c in enumerate(terms)]
    lo, hi = trunc.haar_range(np.append(x, y))
    out = []
    for kind, m, pos, contrib in _haar_levels(x, y, lo, hi, trunc.m_max):
        ids = [(kind, int(l)) if m is None else (kind, int(l), m) for l in pos]
        out.extend(zip(ids, contrib.tolist()))
    return out


def series_score(k, f, y, trunc=None):
    """Truncated series approximation of :func:`kernel_score`."""
    k = _as_kernel(k)
    trunc = trunc or TruncationSpec()
    x = _samples(f)
    y = float(y)
    if k.name == "gaussian":
        return float(np.sum(_gaussian_terms(x, y, trunc.L)))
    lo, hi = trunc.haar_range(np.append(x, y))
    return float(sum(np.sum(c) for *_, c in _haar_levels(x, y, lo, hi, trunc.m_max)))


def write_contributions_csv(path, contributions):
    """Write ``kind,l,m,contribution`` rows (``m`` empty where not applicable)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "l", "m", "contribution"])
        for ident, c in contributions:
            kind, l = ident[0], ident[1]
            m = ident[2] if len(ident) > 2 else ""
            w.writerow([kind, l, m, repr(float(c))])
