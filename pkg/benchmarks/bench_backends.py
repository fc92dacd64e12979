"""Compare the compiled path kernel against the pure-Python fallback.

Run:  python benchmarks/bench_backends.py [--paths N] [--steps N]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from drawdown.dual import solve_coefficients
from drawdown.kernels import _pyref, layout
from drawdown.model import ModelParams, derive

try:
    from drawdown.kernels import _core
except ImportError:
    _core = None


def bench(run_paths, mode, dW, cvec, snap_idx, dt, repeats=3):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out, diag = run_paths(mode, 0.5, 0.85, dW, 25.0, 1.0, dt, cvec, snap_idx)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=500)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    params = ModelParams(r=0.05, mu=0.14, sigma=0.35, rho=0.02, R=2.0, b=0.7)
    sol = solve_coefficients(derive(params), params)
    cvec = layout.pack(sol)
    dt = 1e-3
    rng = np.random.default_rng(0)
    dW = rng.standard_normal((args.paths, args.steps)) * math.sqrt(dt)
    snap_idx = np.array([0, args.steps // 2, args.steps], dtype=np.int64)

    rows = []
    t_py, out_py = bench(_pyref.run_paths, 0, dW, cvec, snap_idx, dt)
    rows.append(("python", t_py))
    if _core is not None:
        t_c, out_c = bench(_core.run_paths, 0, dW, cvec, snap_idx, dt)
        rows.append(("compiled", t_c))
        rel = np.max(
            np.abs(out_c["w"] - out_py["w"]) / np.maximum(1.0, np.abs(out_py["w"]))
        )
        print(f"max relative w difference: {rel:.3e}")
        print(f"speedup: {t_py / t_c:.1f}x")
    else:
        print("compiled kernel not available; benchmarking fallback only")

    steps = args.paths * args.steps
    for name, t in rows:
        print(f"{name:9s} {t * 1e3:9.1f} ms   {steps / t / 1e6:8.2f} Msteps/s")


if __name__ == "__main__":
    main()
