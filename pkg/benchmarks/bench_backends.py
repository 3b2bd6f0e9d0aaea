#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs each hot kernel on representative inputs and reports median per-call
time for both paths plus the speedup. The JIT twins are compiled (and
cached) before timing starts.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from triscope import backends


def median_time(fn, args, repeats, min_loops=1):
    times = []
    for _ in range(repeats):
        loops = min_loops
        while True:
            t0 = time.perf_counter()
            for _ in range(loops):
                fn(*args)
            dt = time.perf_counter() - t0
            if dt > 0.02 or loops >= 1024:
                times.append(dt / loops)
                break
            loops *= 4
    return float(np.median(times))


def hmm_case(rng, t):
    obs = np.concatenate([rng.exponential(10.0, t // 2), rng.exponential(500.0, t - t // 2)])
    rng.shuffle(obs)
    trans = np.array([[0.9, 0.1], [0.1, 0.9]])
    init = np.array([0.5, 0.5])
    means = np.array([10.0, 500.0])
    variances = np.array([100.0, 2.5e5])
    return obs, trans, init, means, variances


def cases(rng):
    obs_s, *params_s = hmm_case(rng, 50)
    obs_l, *params_l = hmm_case(rng, 1500)
    with np.errstate(divide="ignore"):
        log_trans = np.log(params_s[0])
        log_init = np.log(params_s[1])
    yield (
        "forward T=1500",
        backends.forward_loglik_np,
        getattr(backends, "forward_loglik_jit", None),
        (obs_l, *params_l),
    )
    yield (
        "viterbi T=1500",
        backends.viterbi_np,
        getattr(backends, "viterbi_jit", None),
        (obs_l, log_trans, log_init, params_l[2], params_l[3]),
    )
    yield (
        "baum_welch T=50",
        backends.baum_welch_np,
        getattr(backends, "baum_welch_jit", None),
        (obs_s, *params_s, 1e-9, 1e-6, 200),
    )
    yield (
        "baum_welch T=1500",
        backends.baum_welch_np,
        getattr(backends, "baum_welch_jit", None),
        (obs_l, *params_l, 1e-9, 1e-6, 200),
    )
    yield (
        "ward n=120 d=64",
        backends.ward_linkage_np,
        getattr(backends, "ward_linkage_jit", None),
        (rng.normal(size=(120, 64)),),
    )
    yield (
        "ward n=400 d=16",
        backends.ward_linkage_np,
        getattr(backends, "ward_linkage_jit", None),
        (rng.normal(size=(400, 16)),),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7, help="timing repetitions per kernel")
    args = parser.parse_args()

    if backends.HAVE_NUMBA:
        backends.warmup()
        print(f"numba available (active backend: {backends.backend_name()})")
    else:
        print("numba NOT available: timing the numpy path only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    print("-" * 57)
    for name, np_fn, jit_fn, call_args in cases(rng):
        t_np = median_time(np_fn, call_args, args.repeats)
        if jit_fn is not None:
            jit_fn(*call_args)  # ensure this signature is compiled
            t_jit = median_time(jit_fn, call_args, args.repeats)
            print(
                f"{name:<20} {t_np * 1e3:>12.3f} {t_jit * 1e3:>12.3f} {t_np / t_jit:>8.1f}x"
            )
        else:
            print(f"{name:<20} {t_np * 1e3:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
