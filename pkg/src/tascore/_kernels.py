"""Hot inner loops: pairwise-distance sums behind the energy, patched energy
and variogram scores.

Every kernel has a compiled ``_nb`` variant and a ``_np`` variant. The public
wrappers dispatch on :data:`tascore._accel.USE_NUMBA`; both variants are kept
importable so tests and the benchmark can compare them directly.
"""

import numpy as np

from . import _accel
from ._accel import njit

# -- energy score -----------------------------------------------------------


@njit
def _powhalf(v, alpha):
    if alpha == 1.0:
        return np.sqrt(v)
    if alpha == 2.0:
        return v
    return v ** (0.5 * alpha)


@njit
def _energy_terms_nb(members, y, alpha):
    M, d = members.shape
    obs = 0.0
    for m in range(M):
        acc = 0.0
        for i in range(d):
            t = members[m, i] - y[i]
            acc += t * t
        obs += _powhalf(acc, alpha)
    pairs = 0.0
    for m in range(M):
        for k in range(m + 1, M):
            acc = 0.0
            for i in range(d):
                t = members[m, i] - members[k, i]
                acc += t * t
            pairs += _powhalf(acc, alpha)
    return obs / M, pairs


def _energy_terms_np(members, y, alpha, chunk=64):
    M = members.shape[0]
    obs = np.mean(np.sum((members - y) ** 2, axis=1) ** (0.5 * alpha))
    pairs = 0.0
    for start in range(0, M, chunk):
        block = members[start : start + chunk]
        sq = np.sum((block[:, None, :] - members[None, :, :]) ** 2, axis=2)
        rows = np.arange(start, start + block.shape[0])[:, None]
        upper = np.arange(M)[None, :] > rows
        pairs += np.sum(sq[upper] ** (0.5 * alpha))
    return obs, float(pairs)


def energy_terms(members, y, alpha=1.0):
    """Return ``(mean_m |x_m - y|^a, sum_{m<k} |x_m - x_k|^a)``."""
    members = np.ascontiguousarray(members, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _accel.USE_NUMBA:
        obs, pairs = _energy_terms_nb(members, y, float(alpha))
        return float(obs), float(pairs)
    return _energy_terms_np(members, y, float(alpha))


# -- patched energy score ---------------------------------------------------


def _n_anchors(n, size, stride):
    return (n - size) // stride + 1


@njit(fastmath=True)
def _accum_pow(box, n, alpha, out):
    if alpha == 1.0:
        for t in range(n):
            out[t] += np.sqrt(box[t])
    else:
        h = 0.5 * alpha
        for t in range(n):
            out[t] += box[t] ** h


@njit(fastmath=True)
def _window_sums_nb(D, H, W, sizes, stride, alpha, rows, box, out, offs):
    # rows[i*W + b]: running sum of D[i, b:b+cur]; sizes ascending
    for t in range(H * W):
        rows[t] = 0.0
    cur = 0
    for q in range(sizes.shape[0]):
        s = sizes[q]
        nr = (H - s) // stride + 1
        nc = (W - s) // stride + 1
        span = (nc - 1) * stride + 1
        for j in range(cur, s):
            for i in range(H):
                base = i * W
                for b in range(span):
                    rows[base + b] += D[base + b + j]
        cur = s
        for a in range(nr):
            ob = a * nc
            i0 = a * stride
            for b in range(nc):
                box[ob + b] = rows[i0 * W + b * stride]
            for i in range(i0 + 1, i0 + s):
                ib = i * W
                for b in range(nc):
                    box[ob + b] += rows[ib + b * stride]
        _accum_pow(box, nr * nc, alpha, out[offs[q] : offs[q + 1]])


@njit(fastmath=True)
def _patch_energy_terms_nb(members, y, H, W, sizes, stride, alpha):
    M, d = members.shape
    offs = np.zeros(sizes.shape[0] + 1, np.int64)
    for q in range(sizes.shape[0]):
        nr = (H - sizes[q]) // stride + 1
        nc = (W - sizes[q]) // stride + 1
        offs[q + 1] = offs[q] + nr * nc
    obs = np.zeros(offs[-1])
    pairs = np.zeros(offs[-1])
    D = np.empty(d)
    rows = np.empty(d)
    box = np.empty(d)
    for m in range(M):
        for t in range(d):
            u = members[m, t] - y[t]
            D[t] = u * u
        _window_sums_nb(D, H, W, sizes, stride, alpha, rows, box, obs, offs)
    for m in range(M):
        for k in range(m + 1, M):
            for t in range(d):
                u = members[m, t] - members[k, t]
                D[t] = u * u
            _window_sums_nb(D, H, W, sizes, stride, alpha, rows, box, pairs, offs)
    return obs / M, pairs, offs


def _box_sums_np(D, size, stride):
    # D: (..., H, W); window sums accumulated in column-then-row order
    H, W = D.shape[-2:]
    nr, nc = _n_anchors(H, size, stride), _n_anchors(W, size, stride)
    cols = np.arange(nc) * stride
    rows_idx = np.arange(nr) * stride
    r = D[..., :, cols].copy()
    for j in range(1, size):
        r += D[..., :, cols + j]
    out = r[..., rows_idx, :].copy()
    for i in range(1, size):
        out += r[..., rows_idx + i, :]
    return out


def _patch_energy_terms_np(members, y, size, stride, alpha):
    M = members.shape[0]
    half = 0.5 * alpha
    obs = _box_sums_np((members - y) ** 2, size, stride) ** half
    obs = obs.reshape(M, -1).mean(axis=0)
    pairs = np.zeros_like(obs)
    for m in range(M - 1):
        D = (members[m + 1 :] - members[m]) ** 2
        pairs += (_box_sums_np(D, size, stride) ** half).reshape(D.shape[0], -1).sum(axis=0)
    return obs, pairs


def patch_energy_terms(members, y, sizes, stride=1, alpha=1.0):
    """Per-patch energy-score sums over all square patches of each size.

    ``members`` has shape ``(M, H, W)`` and ``y`` shape ``(H, W)``. Patches
    are enumerated row-major by anchor. Returns one ``(obs, pairs)`` tuple per
    entry of ``sizes`` with ``obs[P] = mean_m |x_mP - y_P|^a`` and
    ``pairs[P] = sum_{m<k} |x_mP - x_kP|^a``.
    """
    members = np.ascontiguousarray(members, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    sizes = [int(s) for s in sizes]
    M, H, W = members.shape
    if _accel.USE_NUMBA:
        order = np.argsort(sizes, kind="stable")
        srt = np.asarray(sizes, dtype=np.int64)[order]
        obs, pairs, offs = _patch_energy_terms_nb(
            members.reshape(M, H * W), y.ravel(), H, W, srt, int(stride), float(alpha)
        )
        by_size = {}
        for q, s in enumerate(srt):
            by_size[int(s)] = (obs[offs[q] : offs[q + 1]], pairs[offs[q] : offs[q + 1]])
        return [by_size[s] for s in sizes]
    return [_patch_energy_terms_np(members, y, s, int(stride), float(alpha)) for s in sizes]


# -- variogram score --------------------------------------------------------


@njit
def _abspow(v, p):
    a = abs(v)
    if p == 1.0:
        return a
    if p == 2.0:
        return a * a
    if p == 0.5:
        return np.sqrt(a)
    return a**p


@njit
def _vs_expected_nb(expected, y, w, p):
    d = y.shape[0]
    total = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            g = _abspow(y[i] - y[j], p)
            t = expected[i, j] - g
            total += (w[i, j] + w[j, i]) * t * t
    return total


def _vs_expected_np(expected, y, w, p):
    g = np.abs(y[:, None] - y[None, :]) ** p
    return float(np.sum(w * (expected - g) ** 2))


def vs_from_expected(expected, y, w, p):
    """``sum_ij w_ij (E_ij - |y_i - y_j|^p)^2`` for a symmetric expectation matrix
    with zero diagonal."""
    expected = np.ascontiguousarray(expected, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if _accel.USE_NUMBA:
        return float(_vs_expected_nb(expected, y, w, float(p)))
    return _vs_expected_np(expected, y, w, float(p))


@njit
def _pairwise_mean_power_nb(members, p):
    M, d = members.shape
    out = np.zeros((d, d))
    for m in range(M):
        for i in range(d):
            xi = members[m, i]
            for j in range(i + 1, d):
                out[i, j] += _abspow(xi - members[m, j], p)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] /= M
            out[j, i] = out[i, j]
    return out


def _pairwise_mean_power_np(members, p):
    M, d = members.shape
    out = np.zeros((d, d))
    for x in members:
        out += np.abs(x[:, None] - x[None, :]) ** p
    return out / M


def pairwise_mean_power(members, p):
    """Ensemble mean of ``|X_i - X_j|^p`` as a ``(d, d)`` matrix."""
    members = np.ascontiguousarray(members, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _pairwise_mean_power_nb(members, float(p))
    return _pairwise_mean_power_np(members, float(p))


@njit
def _pairwise_functional_nb(members, coef, p):
    M, d = members.shape
    out = np.zeros(M)
    for m in range(M):
        acc = 0.0
        for i in range(d):
            xi = members[m, i]
            for j in range(i + 1, d):
                acc += coef[i, j] * _abspow(xi - members[m, j], p)
        out[m] = acc
    return out


def _pairwise_functional_np(members, coef, p):
    iu = np.triu_indices(members.shape[1], 1)
    c = coef[iu]
    return np.array([np.dot(c, np.abs(x[iu[0]] - x[iu[1]]) ** p) for x in members])


def pairwise_functional(members, coef, p):
    """Per member: ``sum_{i<j} coef_ij |x_i - x_j|^p``."""
    members = np.ascontiguousarray(members, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _pairwise_functional_nb(members, coef, float(p))
    return _pairwise_functional_np(members, coef, float(p))


@njit
def _pairwise_power_moments_nb(members, p):
    M, d = members.shape
    mean = np.zeros((d, d))
    meansq = np.zeros((d, d))
    for m in range(M):
        for i in range(d):
            xi = members[m, i]
            for j in range(i + 1, d):
                v = _abspow(xi - members[m, j], p)
                mean[i, j] += v
                meansq[i, j] += v * v
    for i in range(d):
        for j in range(i + 1, d):
            mean[i, j] /= M
            meansq[i, j] /= M
            mean[j, i] = mean[i, j]
            meansq[j, i] = meansq[i, j]
    return mean, meansq


def _pairwise_power_moments_np(members, p):
    M, d = members.shape
    mean = np.zeros((d, d))
    meansq = np.zeros((d, d))
    for x in members:
        v = np.abs(x[:, None] - x[None, :]) ** p
        mean += v
        meansq += v * v
    return mean / M, meansq / M


def pairwise_power_moments(members, p):
    """Ensemble means of ``|X_i - X_j|^p`` and of its square, as ``(d, d)`` matrices."""
    members = np.ascontiguousarray(members, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _pairwise_power_moments_nb(members, float(p))
    return _pairwise_power_moments_np(members, float(p))
