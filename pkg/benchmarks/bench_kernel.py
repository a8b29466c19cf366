"""Compare the compiled kernel against the numpy fallback.

Run:  python3 benchmarks/bench_kernel.py

Shapes mirror the hot loops: single matrices stepped sequentially
(game rounds), small stacks (per-symbol batches), and wide stacks
(seed-parallel regret sweeps).
"""

import time

import numpy as np

from qelab._kernel import fallback

try:
    from qelab._kernel import _cykernel
    IMPLS = [fallback, _cykernel]
except ImportError:
    print("compiled kernel not built; benchmarking fallback only")
    IMPLS = [fallback]


def bench(impl, batch, d, reps):
    rng = np.random.default_rng(7)
    g = rng.standard_normal((batch, d, d)) + 1j * rng.standard_normal((batch, d, d))
    a = 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
    impl.eigh_batch(a)  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        impl.eigh_batch(a)
    dt = time.perf_counter() - t0
    return dt / reps


def main():
    cases = [(1, 4), (1, 16), (8, 4), (50, 16), (200, 8)]
    print(f"{'batch':>6} {'dim':>4} " + " ".join(f"{im.name:>12}" for im in IMPLS)
          + ("      speedup" if len(IMPLS) == 2 else ""))
    for batch, d in cases:
        reps = max(20, int(2e5 / (batch * d * d)))
        times = [bench(im, batch, d, reps) for im in IMPLS]
        row = f"{batch:>6} {d:>4} " + " ".join(f"{t * 1e6:>10.1f}us" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:>8.2f}x"
        print(row)


if __name__ == "__main__":
    main()
