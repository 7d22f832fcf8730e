"""Compiled vs numpy accumulation kernels, plus one end-to-end fit.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py [--reps 5]

Each row is the median wall-clock time of ``reps`` calls; the last column is
python_ms / compiled_ms. Outputs of the two backends are also compared.
"""
import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from planarcda._ext import kernels_py

try:
    from planarcda._ext import _kernels as compiled
except ImportError:
    compiled = None


def _median_ms(fn, reps):
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1000.0)
    return statistics.median(times)


def cases(rng):
    """(name, kernel name, args) triples at sizes the solvers actually see."""
    out = []
    for N, m, d in ((60, 16, 8), (200, 32, 8), (400, 64, 8)):
        U = rng.standard_normal((N, m, d))
        V = rng.standard_normal((N, m // 2, d))
        W = np.exp(-rng.random((N, N)))
        W = 0.5 * (W + W.T)
        out.append((f"pairwise_sqdist N={N} {m}x{m}", "pairwise_sqdist",
                    (rng.standard_normal((N, m, m)),)))
        out.append((f"sym_gram N={N} {m}x{d}", "sym_gram", (U,)))
        out.append((f"bilinear_gram N={N} {m}x{d}", "bilinear_gram", (U, V)))
        out.append((f"laplacian_gram N={N} {m}x{d}", "laplacian_gram", (U, V, W)))
    for N, c, rows, cols in ((60, 3, 16, 8), (400, 20, 16, 8)):
        F = rng.standard_normal((N, rows, cols))
        groups = np.arange(N) % c
        means = np.stack([F[groups == k].mean(axis=0) for k in range(c)])
        counts = np.bincount(groups).astype(float)
        fixed = np.linalg.qr(rng.standard_normal((cols, 2)))[0]
        out.append((f"scatter_pair N={N} {rows}x{cols}", "scatter_pair",
                    (F, groups, means, F.mean(axis=0), counts, fixed)))
    return out


_FIT_SNIPPET = """
import statistics, time
from planarcda import kernels
from planarcda.cdtrl import fit_cdtrl
from planarcda.data import SynthSpec, gen_synthetic
data = gen_synthetic(SynthSpec(classes=5, per_class=12, class_separation=3.0,
                               noise_sigma=1.0, seed=1))
times = []
for _ in range({reps}):
    t = time.perf_counter()
    fit_cdtrl(data)
    times.append((time.perf_counter() - t) * 1000.0)
print(kernels.BACKEND, statistics.median(times))
"""


def end_to_end(reps):
    """Median fit_cdtrl time under each backend (the backend is fixed at import)."""
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, PLANARCDA_PURE=pure)
        res = subprocess.run([sys.executable, "-c", _FIT_SNIPPET.format(reps=reps)],
                             env=env, capture_output=True, text=True, check=True)
        backend, ms = res.stdout.split()
        out[backend] = float(ms)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print("case\tpython_ms\tcompiled_ms\tspeedup\tmax_abs_diff")
    for name, kernel, call_args in cases(rng):
        py = getattr(kernels_py, kernel)
        t_py = _median_ms(lambda: py(*call_args), args.reps)
        if compiled is None:
            print(f"{name}\t{t_py:.3f}\tnan\tnan\tnan")
            continue
        cc = getattr(compiled, kernel)
        t_cc = _median_ms(lambda: cc(*call_args), args.reps)
        a, b = py(*call_args), cc(*call_args)
        a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
        print(f"{name}\t{t_py:.3f}\t{t_cc:.3f}\t{t_py / t_cc:.2f}\t{diff:.2e}")
    fit = end_to_end(args.reps)
    t_py, t_cc = fit.get("python", float("nan")), fit.get("compiled", float("nan"))
    print(f"fit_cdtrl c=5 N=60\t{t_py:.3f}\t{t_cc:.3f}\t{t_py / t_cc:.2f}\tnan")


if __name__ == "__main__":
    main()
