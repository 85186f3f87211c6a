#!/usr/bin/env python3
"""
Side-by-side benchmark: numpy kernels vs the numba-compiled ones.

Times the three hot kernels (path integrals, segment sort, running max)
on identical inputs and validates agreement: float integrals to round-off
(the two backends sum segments in different orders), integer outputs
exactly.  Run with PAMLAB_NUMBA=0 to confirm the numpy fallback is the
active backend; the comparison itself always imports both
implementations directly.
"""
import time

import numpy as np

from pamlab import EnvConfig, sample_env
from pamlab import kernels


def make_inputs(rng, n_rep, d, mean_jumps, t):
    counts = rng.poisson(mean_jumps, n_rep)
    rep_off = np.zeros(n_rep + 1, dtype=np.int64)
    np.cumsum(counts, out=rep_off[1:])
    jt = rng.uniform(0.0, t, int(rep_off[-1]))
    for r in range(n_rep):
        jt[rep_off[r]:rep_off[r + 1]].sort()
    dirs = rng.integers(0, 2 * d, int(rep_off[-1]), dtype=np.int64)
    steps = 2 * rng.integers(0, 2, int(rep_off[-1]), dtype=np.int64) - 1
    return jt, dirs, steps, rep_off


def best_of(fn, n=3):
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    if not kernels._HAVE_NUMBA:
        print("numba backend disabled (PAMLAB_NUMBA=0) or numba not "
              "importable; only the numpy kernels exist in this process, "
              "nothing to compare")
        return

    d, t = 2, 2.0
    cfg = EnvConfig(kind="spin-markov", d=d, L=6, T=t, seed=7)
    env = sample_env(cfg).flat()
    rng = np.random.default_rng(99)

    print(f"active backend: {kernels.BACKEND}")
    print("warming up the JIT (compilation excluded from timings)...")
    jt, dirs, steps, rep_off = make_inputs(rng, 10, d, 5, t)
    t0 = time.perf_counter()
    kernels.fk_path_integrals_nb(env, jt, dirs, rep_off, t)
    kernels.walk_running_max_abs_nb(steps, rep_off)
    kernels.sort_segments_nb(jt.copy(), rep_off)
    print(f"warmup: {time.perf_counter() - t0:.1f}s\n")

    hdr = f"{'kernel':<22}{'n_rep':>8}  {'numpy (s)':>10}  {'numba (s)':>10}  {'speedup':>8}  {'agree':>6}"
    print(hdr)
    print("-" * len(hdr))
    for n_rep in (1_000, 10_000, 50_000):
        jt, dirs, steps, rep_off = make_inputs(rng, n_rep, d, 30, t)

        t_np, out_np = best_of(lambda: kernels.fk_path_integrals(
            env, jt, dirs, rep_off, t))
        t_nb, out_nb = best_of(lambda: kernels.fk_path_integrals_nb(
            env, jt, dirs, rep_off, t))
        agree = (np.allclose(out_np[0], out_nb[0], rtol=1e-11, atol=1e-12)
                 and np.array_equal(out_np[1], out_nb[1])
                 and np.allclose(out_np[2], out_nb[2], rtol=1e-11))
        print(f"{'fk_path_integrals':<22}{n_rep:>8}  {t_np:>10.4f}  "
              f"{t_nb:>10.4f}  {t_np / t_nb:>7.1f}x  {'ok' if agree else 'FAIL':>6}")

        a_np, a_nb = jt.copy(), jt.copy()
        t_np, _ = best_of(lambda: kernels.sort_segments(a_np, rep_off))
        t_nb, _ = best_of(lambda: kernels.sort_segments_nb(a_nb, rep_off))
        agree = np.array_equal(a_np, a_nb)
        print(f"{'sort_segments':<22}{n_rep:>8}  {t_np:>10.4f}  "
              f"{t_nb:>10.4f}  {t_np / t_nb:>7.1f}x  {'ok' if agree else 'FAIL':>6}")

        t_np, m_np = best_of(lambda: kernels.walk_running_max_abs(steps, rep_off))
        t_nb, m_nb = best_of(lambda: kernels.walk_running_max_abs_nb(steps, rep_off))
        agree = np.array_equal(m_np, m_nb)
        print(f"{'walk_running_max_abs':<22}{n_rep:>8}  {t_np:>10.4f}  "
              f"{t_nb:>10.4f}  {t_np / t_nb:>7.1f}x  {'ok' if agree else 'FAIL':>6}")


if __name__ == "__main__":
    main()
