"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both paths are run in one process by toggling ``tascore._accel.USE_NUMBA``;
setting ``TASCORE_DISABLE_NUMBA=1`` has the same effect for library users.
Results are checked for agreement before timings are reported.
"""

import argparse
import time

import numpy as np

from tascore import _accel, _kernels


def cases(rng):
    M, H, W = 100, 20, 20
    fields = rng.standard_normal((M, H, W))
    y = rng.standard_normal((H, W))
    flat = fields.reshape(M, H * W)
    small = flat[:50, :100]
    w = rng.random((100, 100))
    w = w + w.T
    E = _kernels.pairwise_mean_power(small, 0.5)
    return {
        "energy_terms (M=100, d=400)": lambda: _kernels.energy_terms(flat, y.ravel(), 1.0),
        "patch_energy_terms (s=2,3,5,20)": lambda: _kernels.patch_energy_terms(fields, y, [2, 3, 5, 20]),
        "pairwise_mean_power (M=100, d=400)": lambda: _kernels.pairwise_mean_power(flat, 0.5),
        "pairwise_power_moments (M=50, d=100)": lambda: _kernels.pairwise_power_moments(small, 0.5),
        "vs_from_expected (d=100)": lambda: _kernels.vs_from_expected(E, y.ravel()[:100], w, 0.5),
    }


def _flatten(out):
    if isinstance(out, (list, tuple)):
        return np.concatenate([_flatten(o) for o in out])
    return np.atleast_1d(np.asarray(out, dtype=np.float64)).ravel()


def timeit(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    saved = _accel.USE_NUMBA
    print(f"{'kernel':<40} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    try:
        for name, fn in cases(rng).items():
            _accel.USE_NUMBA = False
            ref = _flatten(fn())
            t_np = timeit(fn, args.repeat)
            _accel.USE_NUMBA = True
            got = _flatten(fn())
            t_nb = timeit(fn, args.repeat)
            if not np.allclose(ref, got, rtol=1e-9, atol=1e-9):
                raise SystemExit(f"{name}: numba and numpy results disagree")
            print(f"{name:<40} {1e3 * t_np:>11.2f} {1e3 * t_nb:>11.2f} {t_np / t_nb:>7.1f}x")
    finally:
        _accel.USE_NUMBA = saved


if __name__ == "__main__":
    main()
