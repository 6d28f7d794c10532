"""Compare the compiled kernels against the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. Prints one row per
kernel with the best-of-N wall time for each backend and the speedup, and
checks that both backends return the same value.
"""

import argparse
import time

import numpy as np

from vidmeter import _pykernels

try:
    from vidmeter import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(seed=0):
    rng = np.random.default_rng(seed)
    n = 1000
    rel = (rng.random(n) < 0.1).astype(np.int8)
    # two strata as in the default plan: depth 1-250 fully judged, 251-1000 at ~11%
    stratum = np.where(np.arange(n) < 250, 0, 1).astype(np.int32)
    stratum[rng.random(n) < 0.2] = -1
    status = np.where(rel == 1, 1, 0).astype(np.int8)
    status[(stratum == 1) & (rng.random(n) > 0.111)] = -1
    rates = np.array([1.0, 0.111])
    diffs = rng.normal(0, 0.05, size=18)
    # same tie tolerance as stats.randomization_test
    thr = abs(diffs.sum()) - 1e-9 * max(1.0, np.abs(diffs).sum())
    return {
        "ap_from_flags (1000 ranks)": ("ap_from_flags", (rel, int(rel.sum()))),
        "xinfap_scan (1000 ranks, 2 strata)": ("xinfap_scan", (stratum, status, rates, 1e-5)),
        "signflip_exact_count (T=18)": ("signflip_exact_count", (diffs, thr)),
    }


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"{'kernel':38s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  agree")
    for label, (name, call) in _cases().items():
        tp, vp = _best(getattr(_pykernels, name), call, args.repeat)
        if _kernels is None:
            print(f"{label:38s} {tp * 1e3:10.3f} {'n/a':>10s} {'n/a':>8s}  -")
            continue
        tc, vc = _best(getattr(_kernels, name), call, args.repeat)
        agree = vp == vc if isinstance(vp, int) else abs(vp - vc) <= 1e-12 * max(1.0, abs(vp))
        print(f"{label:38s} {tp * 1e3:10.3f} {tc * 1e3:10.3f} {tp / tc:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
