"""Monte-Carlo engine for the controlled wealth process.

Stock prices are exact geometric Brownian motion; wealth follows an
Euler-Maruyama step with the policy frozen over each interval. Under the
optimal strategy the running max ratchets (cbar <- max(cbar, w/a)) and
wealth is projected onto the feasibility floor after each step, with both
events counted as diagnostics. The engine also accumulates the
verification functionals: Y (discounted utility plus discounted value),
the state-price budget integral, and Z.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .dual import DualSolution, region_boundaries
from .errors import Bankruptcy, ConfigError
from .kernels import layout as L
from .model import ModelParams

_CHUNK_PATHS = 256


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: float
    n_paths: int
    seed: int
    w0: float
    cbar0: float


@dataclass(frozen=True)
class PathRecord:
    """Recorded time series of one path at the snapshot nodes."""

    t: np.ndarray
    S: np.ndarray
    w: np.ndarray
    cbar: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    c: np.ndarray
    region: np.ndarray  # int codes; names in kernels.layout.REGION_NAMES
    Y: np.ndarray
    W: np.ndarray | None = None


@dataclass(frozen=True)
class Ensemble:
    """All recorded paths plus aggregate diagnostics."""

    t: np.ndarray  # snapshot times, shape (n_snap,)
    arrays: dict  # name -> (n_paths, n_snap)
    diagnostics: dict  # name -> (n_paths,)
    config: SimConfig
    params: ModelParams
    strategy: str
    n_steps: int

    @property
    def n_paths(self) -> int:
        return self.config.n_paths

    def path(self, i: int, keep_brownian: bool = False) -> PathRecord:
        A = self.arrays
        return PathRecord(
            t=self.t,
            S=A["S"][i],
            w=A["w"][i],
            cbar=A["cbar"][i],
            x=A["x"][i],
            theta=A["theta"][i],
            c=A["c"][i],
            region=A["region"][i],
            Y=A["Y"][i],
            W=A["W"][i] if keep_brownian else None,
        )

    def snap_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[j] - t) > 0.5 * self.config.dt + 1e-12:
            raise ConfigError(f"t={t} is not a recorded snapshot time")
        return j


def _validate_config(config: SimConfig, params: ModelParams) -> None:
    errs = []
    if not config.dt > 0:
        errs.append("dt must be > 0")
    if not config.t_end >= config.dt:
        errs.append("t_end must be >= dt")
    if not config.n_paths >= 1:
        errs.append("n_paths must be >= 1")
    if not config.cbar0 > 0:
        errs.append("cbar0 must be > 0")
    elif not config.w0 / config.cbar0 >= params.b / params.r - 1e-12:
        errs.append("w0/cbar0 must be >= b/r")
    if errs:
        raise ConfigError("; ".join(errs))


def parse_strategy(spec) -> tuple[int, float, float, str]:
    """Normalize a strategy spec to (mode, pi, s, label)."""
    if spec == "optimal":
        return kernels.MODE_OPTIMAL, 0.0, 0.0, "optimal"
    if isinstance(spec, str) and spec.startswith("prop:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad strategy spec {spec!r}; expected prop:PI:S")
        return kernels.MODE_PROP, float(parts[1]), float(parts[2]), spec
    if isinstance(spec, tuple) and len(spec) == 3 and spec[0] == "prop":
        return kernels.MODE_PROP, float(spec[1]), float(spec[2]), f"prop:{spec[1]}:{spec[2]}"
    raise ConfigError(f"unknown strategy {spec!r}")


def _snapshot_indices(n_steps: int, record_every: int) -> np.ndarray:
    idx = list(range(0, n_steps + 1, record_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.asarray(idx, dtype=np.int64)


def path_increments(seed: int, i: int, n_steps: int, dt: float) -> np.ndarray:
    """Brownian increments of path i: counter-based seed XOR path index."""
    rng = np.random.default_rng((int(seed) ^ i) & 0xFFFFFFFFFFFFFFFF)
    return rng.standard_normal(n_steps) * math.sqrt(dt)


def simulate(
    params: ModelParams,
    sol: DualSolution,
    config: SimConfig,
    strategy="optimal",
    record_every: int | None = None,
) -> Ensemble:
    """Run the ensemble and return snapshot records plus diagnostics.

    record_every = k keeps every k-th node (plus the endpoints). The
    default records every node for small runs and about 100 snapshots for
    large ones. Identical (config, strategy) gives bit-identical output.
    """
    _validate_config(config, params)
    mode, pi, s, label = parse_strategy(strategy)
    if mode == kernels.MODE_PROP and not params.b <= s <= 1.0:
        raise ConfigError(f"prop strategy needs s in [b, 1], got s={s}")

    n_steps = int(round(config.t_end / config.dt))
    if abs(n_steps * config.dt - config.t_end) > 1e-9 * config.t_end:
        raise ConfigError("t_end must be an integer multiple of dt")
    if record_every is None:
        record_every = 1 if config.n_paths * (n_steps + 1) <= 4_000_000 else max(
            1, n_steps // 100
        )
    snap_idx = _snapshot_indices(n_steps, record_every)
    cvec = L.pack(sol)

    chunks = [
        (lo, min(lo + _CHUNK_PATHS, config.n_paths))
        for lo in range(0, config.n_paths, _CHUNK_PATHS)
    ]

    def run_chunk(bounds):
        lo, hi = bounds
        dW = np.empty((hi - lo, n_steps))
        for i in range(lo, hi):
            dW[i - lo] = path_increments(config.seed, i, n_steps, config.dt)
        return kernels.run_paths(
            mode, pi, s, dW, config.w0, config.cbar0, config.dt, cvec, snap_idx
        )

    n_threads = 1
    env_threads = os.environ.get("DRAWDOWN_THREADS")
    if env_threads and kernels.BACKEND == "compiled":
        n_threads = max(1, min(int(env_threads), len(chunks)))

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            results = list(ex.map(run_chunk, chunks))
    else:
        results = [run_chunk(b) for b in chunks]

    arrays = {
        k: np.concatenate([r[0][k] for r in results], axis=0) for k in results[0][0]
    }
    diagnostics = {
        k: np.concatenate([r[1][k] for r in results]) for k in results[0][1]
    }

    if mode == kernels.MODE_PROP and (diagnostics["bankrupt_step"] >= 0).any():
        n_bad = int((diagnostics["bankrupt_step"] >= 0).sum())
        raise Bankruptcy(
            f"{n_bad} path(s) hit w < 0 under strategy {label}; "
            "such strategies are inadmissible"
        )

    return Ensemble(
        t=snap_idx * config.dt,
        arrays=arrays,
        diagnostics=diagnostics,
        config=config,
        params=params,
        strategy=label,
        n_steps=n_steps,
    )


@dataclass(frozen=True)
class DriftEstimate:
    mean: float
    stderr: float


def estimate_Y_drift(ensemble: Ensemble, t: float) -> DriftEstimate:
    """Sample mean and stderr of Y_t - Y_0 across paths."""
    j = ensemble.snap_index(t)
    d = ensemble.arrays["Y"][:, j] - ensemble.arrays["Y"][:, 0]
    n = d.size
    if t == 0.0 or j == 0:
        return DriftEstimate(0.0, 0.0)
    se = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return DriftEstimate(float(d.mean()), se)


@dataclass(frozen=True)
class BudgetCheck:
    """State-price budget E[int zeta c dt] vs initial wealth."""

    estimate: float
    stderr: float
    w0: float
    within_bound: bool
    z_mean: np.ndarray  # sample mean of Z_t at each snapshot
    z_nonincreasing: bool  # mean decrements within 3 stderr of <= 0


def estimate_budget(ensemble: Ensemble) -> BudgetCheck:
    zc_T = ensemble.arrays["zc_int"][:, -1]
    n = zc_T.size
    est = float(zc_T.mean())
    se = float(zc_T.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    Z = ensemble.arrays["Z"]
    z_mean = Z.mean(axis=0)
    ok = True
    for j in range(Z.shape[1] - 1):
        d = Z[:, j + 1] - Z[:, j]
        dse = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        if d.mean() > 3.0 * dse + 1e-12:
            ok = False
    return BudgetCheck(
        estimate=est,
        stderr=se,
        w0=ensemble.config.w0,
        within_bound=est <= ensemble.config.w0 + 3.0 * se,
        z_mean=z_mean,
        z_nonincreasing=ok,
    )


def residual_decay(ensemble: Ensemble, t_grid: Sequence[float]) -> list[tuple[float, float, float]]:
    """(t, mean e^{-rho t} V_t, stderr) at each requested time."""
    rho = ensemble.params.rho
    rows = []
    n = ensemble.n_paths
    for t in t_grid:
        j = ensemble.snap_index(t)
        vals = math.exp(-rho * ensemble.t[j]) * ensemble.arrays["V"][:, j]
        se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append((float(ensemble.t[j]), float(vals.mean()), se))
    return rows
