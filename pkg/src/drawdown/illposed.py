"""Demonstration that low risk aversion makes the problem ill-posed.

At or below the critical risk aversion R* the investor can obtain
infinite expected utility. The construction consumes the running maximum
of wealth scaled by a small coefficient lam (c_t = lam * max_s w_s, so
consumption never falls and the drawdown constraint holds for every b)
and invests the Merton fraction of the surplus over the consumption
floor. A change of variables makes the running-max wealth available in
closed form, and the discounted utility flow is bounded below by a
growing exponential whenever 0 < lam < lambda_bound. Monte Carlo cannot
exhibit an infinite value, so we demonstrate the mechanism instead: the
fitted exponential slope of the utility flow must be positive and at
least the closed-form lower-bound rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, WellPosed
from .model import DerivedConstants, ModelParams, derive_constants

_BATCHES = 20  # path batches used for the slope confidence interval


@dataclass(frozen=True)
class IllPosedConfig:
    """Monte-Carlo settings for the blow-up demonstration.

    lam = None picks the midpoint lambda_bound / 2. t_grid are the
    horizons at which the utility flow and its running integral are
    reported; dt is the Brownian grid used to resolve the running max.
    """

    lam: float | None = None
    w0: float = 1.0
    t_grid: tuple = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    dt: float = 0.01
    n_paths: int = 20_000
    seed: int = 0


def _require_ill_posed(params: ModelParams, derived: DerivedConstants) -> None:
    if derived.gamma_M > 0.0:
        raise WellPosed(
            f"R={params.R} exceeds the critical level {derived.R_star:.6g}; "
            "the problem is well-posed and the blow-up construction does not apply"
        )


def lambda_bound(params: ModelParams, derived: DerivedConstants | None = None) -> float:
    """Supremum of consumption coefficients giving a divergent lower bound."""
    if derived is None:
        derived = derive_constants(params)
    _require_ill_posed(params, derived)
    k2 = derived.kappa ** 2
    return params.r * k2 / (2.0 * params.r * params.R + 2.0 * k2)


def growth_rate(params: ModelParams, lam: float,
                derived: DerivedConstants | None = None) -> float:
    """Lower-bound exponential rate of the discounted utility flow.

    The flow e^{-rho t} E[U(lam * wbar_t)] is at least a constant times
    e^{rate t}; the rate is positive exactly when lam < lambda_bound, and
    the utility integral then diverges.
    """
    if derived is None:
        derived = derive_constants(params)
    _require_ill_posed(params, derived)
    a = lam / params.r
    k2 = derived.kappa ** 2
    return (1.0 - params.R) * (
        k2 / (2.0 * params.R) - a * params.r - a * k2 / params.R
    )


def closed_form_wbar(params: ModelParams, lam: float, t: np.ndarray,
                     W: np.ndarray, w0: float = 1.0) -> np.ndarray:
    """Running-max wealth along given Brownian paths, in closed form.

    W holds Brownian values at the times t along its last axis (one row
    per path). The transform whose running max is explicit removes the
    reflection term from the wealth dynamics, leaving geometric Brownian
    motion H_s = e^{(r + kappa^2/R) s} Y_s with Y_s = exp(kappa W_s / R -
    kappa^2 s / 2R^2); undoing it gives wbar_t = w0 * (max_{s<=t} H_s)^{1-a}
    with a = lam / r. The time-growth factor must stay inside the running
    max: pulling it out only bounds wbar from above and the discrepancy
    does not vanish with the step size.
    """
    derived = derive_constants(params)
    a = lam / params.r
    if not 0.0 <= a < 1.0:
        raise ConfigError(f"lam/r must lie in [0, 1), got {a}")
    t = np.asarray(t, dtype=float)
    W = np.asarray(W, dtype=float)
    k = derived.kappa
    R = params.R
    logH = (params.r + k * k / R - k * k / (2.0 * R * R)) * t + (k / R) * W
    logHbar = np.maximum.accumulate(np.maximum(logH, 0.0), axis=-1)
    return w0 * np.exp((1.0 - a) * logHbar)


@dataclass(frozen=True)
class BlowupTable:
    """Monte-Carlo view of the diverging utility integral."""

    t: np.ndarray  # reporting horizons
    G: np.ndarray  # estimate of int_0^T e^{-rho t} U(lam wbar_t) dt
    G_stderr: np.ndarray
    flow: np.ndarray  # utility flow e^{-rho T} E[U(lam wbar_T)]
    flow_stderr: np.ndarray
    lam: float
    lam_max: float
    rate: float  # closed-form lower-bound exponent of the flow
    fitted_slope: float  # OLS slope of log flow vs T
    ci: float  # 95% half-width from path batching


def demonstrate(params: ModelParams, config: IllPosedConfig) -> BlowupTable:
    """Estimate the utility integral G(T) and fit the flow's log-slope.

    The slope is fitted per batch of paths and its confidence interval
    comes from the batch spread, so correlation across horizons on a
    shared path does not understate the error.
    """
    derived = derive_constants(params)
    lam_max = lambda_bound(params, derived)
    lam = 0.5 * lam_max if config.lam is None else config.lam
    if not 0.0 < lam < lam_max:
        raise ConfigError(f"lam must lie in (0, {lam_max:.6g}), got {lam}")
    if config.dt <= 0 or config.n_paths < 2 * _BATCHES or not config.t_grid:
        raise ConfigError("need dt > 0, n_paths >= 40 and a nonempty t_grid")
    t_grid = np.asarray(sorted(config.t_grid), dtype=float)
    if t_grid[0] <= 0:
        raise ConfigError("all horizons must be positive")

    n_steps = int(round(t_grid[-1] / config.dt))
    t = np.arange(n_steps + 1) * config.dt
    rep = np.round(t_grid / config.dt).astype(int)
    rho = params.rho
    disc = np.exp(-rho * t)
    rng = np.random.default_rng(config.seed)

    n_rep = len(t_grid)
    flow_sum = np.zeros(n_rep)
    flow_sq = np.zeros(n_rep)
    G_sum = np.zeros(n_rep)
    G_sq = np.zeros(n_rep)
    batch_flows = []  # per-batch mean flow at each horizon

    chunk = max(_BATCHES, min(2048, config.n_paths))
    per_batch = config.n_paths // _BATCHES
    done = 0
    cur_batch_sum = np.zeros(n_rep)
    cur_batch_n = 0
    while done < config.n_paths:
        m = min(chunk, config.n_paths - done)
        dW = rng.standard_normal((m, n_steps)) * math.sqrt(config.dt)
        W = np.concatenate([np.zeros((m, 1)), np.cumsum(dW, axis=1)], axis=1)
        wbar = closed_form_wbar(params, lam, t, W, config.w0)
        u = disc * params.utility(lam * wbar)
        Gpath = np.concatenate(
            [np.zeros((m, 1)),
             np.cumsum(0.5 * (u[:, 1:] + u[:, :-1]) * config.dt, axis=1)],
            axis=1,
        )
        uf = u[:, rep]
        Gf = Gpath[:, rep]
        flow_sum += uf.sum(axis=0)
        flow_sq += (uf * uf).sum(axis=0)
        G_sum += Gf.sum(axis=0)
        G_sq += (Gf * Gf).sum(axis=0)
        # batch bookkeeping for the slope CI
        row = 0
        while row < m:
            take = min(per_batch - cur_batch_n, m - row)
            cur_batch_sum += uf[row:row + take].sum(axis=0)
            cur_batch_n += take
            row += take
            if cur_batch_n == per_batch and len(batch_flows) < _BATCHES:
                batch_flows.append(cur_batch_sum / per_batch)
                cur_batch_sum = np.zeros(n_rep)
                cur_batch_n = 0
        done += m

    n = config.n_paths
    flow = flow_sum / n
    G = G_sum / n
    flow_se = np.sqrt(np.maximum(flow_sq / n - flow ** 2, 0.0) / n)
    G_se = np.sqrt(np.maximum(G_sq / n - G ** 2, 0.0) / n)

    X = np.column_stack([np.ones(n_rep), t_grid])
    slopes = [
        float(np.linalg.lstsq(X, np.log(bf), rcond=None)[0][1])
        for bf in batch_flows
    ]
    fitted = float(np.mean(slopes))
    ci = 1.96 * float(np.std(slopes, ddof=1) / math.sqrt(len(slopes)))

    return BlowupTable(
        t=t_grid, G=G, G_stderr=G_se, flow=flow, flow_stderr=flow_se,
        lam=lam, lam_max=lam_max,
        rate=growth_rate(params, lam, derived),
        fitted_slope=fitted, ci=ci,
    )


def euler_consistency(params: ModelParams, lam: float, t_end: float = 1.0,
                      dt: float = 1e-4, n_paths: int = 1000,
                      seed: int = 0) -> float:
    """Mean terminal relative error of the closed-form running max.

    Integrates the wealth dynamics of the blow-up strategy directly by
    Euler-Maruyama, tracks the running max of the simulated wealth, and
    compares against closed_form_wbar on the same Brownian path. Returns
    the mean relative error at t_end; weak convergence of the scheme
    keeps it O(sqrt(dt)).
    """
    derived = derive_constants(params)
    _require_ill_posed(params, derived)
    a = lam / params.r
    if not 0.0 <= a < 1.0:
        raise ConfigError(f"lam/r must lie in [0, 1), got {a}")
    k = derived.kappa
    R = params.R
    n_steps = int(round(t_end / dt))
    rng = np.random.default_rng(seed)
    w0 = 1.0
    w = np.full(n_paths, w0)
    wbar = np.full(n_paths, w0)
    Wt = np.zeros(n_paths)
    logHbar = np.zeros(n_paths)
    drift = params.r + k * k / R
    for j in range(n_steps):
        dWj = rng.standard_normal(n_paths) * math.sqrt(dt)
        surplus = w - a * wbar
        w = w + surplus * (drift * dt + (k / R) * dWj)
        wbar = np.maximum(wbar, w)
        Wt += dWj
        tj = (j + 1) * dt
        logHbar = np.maximum(
            logHbar,
            (drift - k * k / (2.0 * R * R)) * tj + (k / R) * Wt,
        )
    exact = w0 * np.exp((1.0 - a) * logHbar)
    return float(np.mean(np.abs(wbar - exact) / exact))
