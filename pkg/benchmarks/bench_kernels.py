"""Numba kernels against their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  The end-to-end rows
start a fresh interpreter per backend, since the choice is made at import
time from TREE_SPECTRA_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tree_spectra import _kernels as kern

END_TO_END = """
import time
from tree_spectra import b_regular, indicator, example_potential
from tree_spectra.eigencount import count_negative
tree = b_regular(2, 3, horizon=80)
cases = [("weyl 1e6", indicator(1.0, 0.0, 2.0), 1e6), ("example 1e5", example_potential(tree, 1.5), 1e5)]
count_negative(tree, cases[0][1], 10.0)  # compile outside the timing
for name, V, a in cases:
    t0 = time.perf_counter()
    n = count_negative(tree, V, a).count
    print(f"{name}|{n}|{time.perf_counter() - t0:.4f}")
"""


def _best(f, repeat):
    f()  # warm-up (triggers compilation)
    return min(timeit.repeat(f, number=1, repeat=repeat))


def kernel_rows(n, shifts, repeat, seed=0):
    rng = np.random.default_rng(seed)
    kd = rng.uniform(2.0, 3.0, n)
    off = -rng.uniform(0.5, 1.0, n - 1)
    q = rng.uniform(0.0, 1.0, n)
    a = np.ones(shifts)
    b = np.geomspace(1.0, 1e3, shifts)
    parent = np.r_[-1, np.array([rng.integers(0, i) for i in range(1, n)])]
    coupling = np.r_[0.0, -rng.uniform(0.5, 1.0, n - 1)]
    diag = rng.normal(size=n)
    kd2 = rng.uniform(3.0, 4.0, n)
    rows = []
    pairs = [
        (f"sturm pencil n={n} shifts={shifts}",
         lambda: kern._sturm_shifts(kd, off, q, a, b), lambda: kern._sturm_shifts_np(kd, off, q, a, b)),
        (f"tree elimination n={n}",
         lambda: kern._tree_inertia(diag, parent, coupling), lambda: kern._tree_inertia_np(diag, parent, coupling)),
        (f"inverse diagonal n={n}",
         lambda: kern._inverse_diagonal(kd2, off), lambda: kern._inverse_diagonal_np(kd2, off)),
    ]
    for name, fast, slow in pairs:
        t_nb = _best(fast, repeat) if kern.NUMBA_ENABLED else float("nan")
        t_np = _best(slow, repeat)
        rows.append((name, t_nb, t_np))
    return rows


def end_to_end():
    out = {}
    for flag in ("1", "0"):
        env = {**os.environ, "TREE_SPECTRA_NUMBA": flag}
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        for line in res.stdout.strip().splitlines():
            name, count, secs = line.split("|")
            out.setdefault(name, {})[flag] = (int(count), float(secs))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="matrix size for the kernel rows")
    ap.add_argument("--shifts", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    print(f"{'kernel':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, t_nb, t_np in kernel_rows(args.n, args.shifts, args.repeat):
        print(f"{name:40s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x")
    if args.skip_end_to_end:
        return
    print()
    print(f"{'count_negative':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'count':>9s}")
    for name, res in end_to_end().items():
        (c1, t1), (c0, t0) = res["1"], res["0"]
        assert c1 == c0, f"backends disagree on {name}: {c1} vs {c0}"
        print(f"{name:40s} {t1:10.4f} {t0:10.4f} {c1:9d}")


if __name__ == "__main__":
    main()
