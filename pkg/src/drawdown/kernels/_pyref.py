"""Pure-numpy path-simulation kernel (fallback backend).

Vectorized across paths, one time step at a time. Mirrors the compiled
kernel in drawdown/kernels/_core.pyx; the compiled version loops per path
instead. Both share the constant-vector layout in layout.py.
"""

from __future__ import annotations

import numpy as np

from . import layout as L

_SOLVE_MAX_ITER = 80
_SOLVE_RTOL = 1e-12

MODE_OPTIMAL = 0
MODE_PROP = 1


def _jp_jpp(c, z, piece):
    """(J', J'') of an inner dual piece (1 = wait, 2 = interior)."""
    alpha, beta = c[L.ALPHA], c[L.BETA]
    za1 = z ** (-alpha - 1.0)
    zb1 = z ** (beta - 1.0)
    if piece == 1:
        c1, c2 = c[L.COEF_B], c[L.COEF_C]
        jp = -alpha * c1 * za1 + beta * c2 * zb1 - 1.0 / c[L.R_RATE]
        jpp = alpha * (alpha + 1.0) * c1 * za1 / z + beta * (beta - 1.0) * c2 * zb1 / z
    else:
        c1, c2 = c[L.COEF_D], c[L.COEF_E]
        jp = -alpha * c1 * za1 + beta * c2 * zb1
        jpp = alpha * (alpha + 1.0) * c1 * za1 / z + beta * (beta - 1.0) * c2 * zb1 / z
        if c[L.LOG_BRANCH]:
            jp = jp - 1.0 / (c[L.RHO] * z)
            jpp = jpp + 1.0 / (c[L.RHO] * z * z)
        else:
            rp = c[L.RP]
            jp = jp - z ** (-rp) / c[L.GAMMA_M]
            jpp = jpp + rp * z ** (-rp - 1.0) / c[L.GAMMA_M]
    return jp, jpp


def _jval(c, z, piece):
    """J of an inner dual piece."""
    alpha, beta = c[L.ALPHA], c[L.BETA]
    za = z ** (-alpha)
    zb = z**beta
    if piece == 1:
        j = c[L.COEF_B] * za + c[L.COEF_C] * zb - z / c[L.R_RATE]
        if not c[L.LOG_BRANCH]:
            j = j + c[L.U_ONE_OVER_RHO]
    else:
        j = c[L.COEF_D] * za + c[L.COEF_E] * zb
        if c[L.LOG_BRANCH]:
            j = j - (np.log(z) + 1.0) / c[L.RHO] - c[L.LOG_U1_CONST]
        else:
            rp = c[L.RP]
            j = j - z ** (1.0 - rp) / ((1.0 - rp) * c[L.GAMMA_M])
    return j


def _solve(c, x, piece, z0, lo, hi):
    """Vector Newton with a bisection safeguard for J'(z) = -x on [lo, hi]."""
    z = np.clip(z0, lo, hi)
    lov = np.full_like(z, lo)
    hiv = np.full_like(z, hi)
    tol = _SOLVE_RTOL * np.maximum(1.0, x)
    jpp = None
    for _ in range(_SOLVE_MAX_ITER):
        jp, jpp = _jp_jpp(c, z, piece)
        f = jp + x
        conv = np.abs(f) <= tol
        if conv.all():
            break
        above = f > 0.0  # J' increasing => z past the root
        hiv = np.where(above & ~conv, np.minimum(hiv, z), hiv)
        lov = np.where(~above & ~conv, np.maximum(lov, z), lov)
        zn = z - f / jpp
        bad = ~np.isfinite(zn) | (zn <= lov) | (zn >= hiv)
        zn = np.where(bad, 0.5 * (lov + hiv), zn)
        z = np.where(conv, z, zn)
    if jpp is None:
        _, jpp = _jp_jpp(c, z, piece)
    return z, jpp


def _bound_region_values(c, u, cbar):
    """theta, v on the minimal-consumption region, via the explicit z map.

    u = x - b/r; z never materializes, which avoids overflow near the floor.
    """
    alpha, F = c[L.ALPHA], c[L.COEF_F]
    theta = c[L.PM] * cbar * (alpha + 1.0) * u
    v = F * (1.0 + alpha) * (u / (alpha * F)) ** (alpha / (1.0 + alpha)) + c[L.U_FLOOR]
    return theta, v


def _ratchet_region_value(c, x):
    """Explicit v for x >= a."""
    if c[L.LOG_BRANCH]:
        return (np.log(x) + 1.0 + np.log(c[L.RHO])) / c[L.RHO] + c[L.COEF_A]
    R, rp = c[L.RRA], c[L.RP]
    return x ** (1.0 - R) / (1.0 - R) * (-c[L.COEF_A] * (1.0 - rp)) ** (1.0 / rp)


def _utility(c, cons):
    if c[L.LOG_BRANCH]:
        return np.log(cons)
    R = c[L.RRA]
    return cons ** (1.0 - R) / (1.0 - R)


def _scale_value(c, v, cbar):
    if c[L.LOG_BRANCH]:
        return v + np.log(cbar) / c[L.RHO]
    return cbar ** (1.0 - c[L.RRA]) * v


def _policy_eval(c, x, cbar, zws):
    """Optimal policy at post-ratchet x in [b/r, a]: theta, c, region, v, z."""
    n = x.shape[0]
    theta = np.zeros(n)
    cons = np.empty(n)
    v = np.full(n, np.nan)
    region = np.empty(n, dtype=np.int8)
    x_floor, x_kink, x_one = c[L.X_FLOOR], c[L.X_KINK], c[L.X_ONE]

    floor_m = x <= x_floor * (1.0 + 1e-14)
    bound_m = ~floor_m & (x <= x_kink)
    inter_m = ~floor_m & ~bound_m & (x <= x_one)
    wait_m = ~floor_m & ~bound_m & ~inter_m

    cons[:] = c[L.B_FRAC] * cbar
    region[floor_m] = L.REG_FLOOR
    v[floor_m] = c[L.U_FLOOR]

    if bound_m.any():
        i = np.where(bound_m)[0]
        theta[i], v[i] = _bound_region_values(c, x[i] - x_floor, cbar[i])
        region[i] = L.REG_BOUND

    if inter_m.any():
        i = np.where(inter_m)[0]
        z, jpp = _solve(c, x[i], 2, zws[i], 1.0, c[L.Z_KINK])
        zws[i] = z
        theta[i] = c[L.PM] * cbar[i] * z * jpp
        cons[i] = cbar[i] / z if c[L.LOG_BRANCH] else cbar[i] * z ** (-c[L.RP])
        v[i] = _jval(c, z, 2) + x[i] * z
        region[i] = L.REG_INTERIOR

    if wait_m.any():
        i = np.where(wait_m)[0]
        z, jpp = _solve(c, x[i], 1, zws[i], c[L.Z_A], 1.0)
        zws[i] = z
        theta[i] = c[L.PM] * cbar[i] * z * jpp
        cons[i] = cbar[i]
        v[i] = _jval(c, z, 1) + x[i] * z
        region[i] = L.REG_WAIT

    return theta, cons, region, v


def _value_eval(c, x, zws, vclamp):
    """v(x) and region for arbitrary x (user strategies): all five cases."""
    n = x.shape[0]
    v = np.full(n, np.nan)
    region = np.full(n, -1, dtype=np.int8)
    x_floor, x_kink, x_one, a = c[L.X_FLOOR], c[L.X_KINK], c[L.X_ONE], c[L.X_A]

    below_m = x < x_floor * (1.0 - 1e-12)
    vclamp += below_m
    floor_m = ~below_m & (x <= x_floor * (1.0 + 1e-14))
    bound_m = (x > x_floor * (1.0 + 1e-14)) & (x <= x_kink)
    inter_m = (x > x_kink) & (x <= x_one)
    wait_m = (x > x_one) & (x <= a)
    ratch_m = x > a

    # V_w >= 0 extends the floor value below the feasible region.
    v[below_m | floor_m] = c[L.U_FLOOR]
    region[below_m | floor_m] = L.REG_FLOOR

    if bound_m.any():
        i = np.where(bound_m)[0]
        _, v[i] = _bound_region_values(c, x[i] - x_floor, np.ones(i.size))
        region[i] = L.REG_BOUND
    if inter_m.any():
        i = np.where(inter_m)[0]
        z, _ = _solve(c, x[i], 2, zws[i], 1.0, c[L.Z_KINK])
        zws[i] = z
        v[i] = _jval(c, z, 2) + x[i] * z
        region[i] = L.REG_INTERIOR
    if wait_m.any():
        i = np.where(wait_m)[0]
        z, _ = _solve(c, x[i], 1, zws[i], c[L.Z_A], 1.0)
        zws[i] = z
        v[i] = _jval(c, z, 1) + x[i] * z
        region[i] = L.REG_WAIT
    if ratch_m.any():
        i = np.where(ratch_m)[0]
        v[i] = _ratchet_region_value(c, x[i])
        region[i] = L.REG_RATCHET
    return v, region


def run_paths(mode, pi, s, dW, w0, cbar0, dt, cvec, snap_idx):
    """Simulate all paths; record state at the node indices in snap_idx.

    dW is (n_paths, n_steps) of Brownian increments (already sqrt(dt)
    scaled). Node k carries the post-ratchet state at time k*dt and the
    policy applied over [k*dt, (k+1)*dt).
    """
    c = cvec
    n_paths, n_steps = dW.shape
    n_snap = len(snap_idx)
    r, mu, sigma, rho, kappa = c[L.R_RATE], c[L.MU], c[L.SIGMA], c[L.RHO], c[L.KAPPA]
    a, x_floor = c[L.X_A], c[L.X_FLOOR]

    out = {
        name: np.empty((n_paths, n_snap))
        for name in ("S", "w", "cbar", "x", "theta", "c", "Y", "V", "zc_int", "Z", "W")
    }
    out["region"] = np.empty((n_paths, n_snap), dtype=np.int8)

    w = np.full(n_paths, float(w0))
    cbar = np.full(n_paths, float(cbar0))
    S = np.ones(n_paths)
    Wc = np.zeros(n_paths)
    y_int = np.zeros(n_paths)
    zc_int = np.zeros(n_paths)
    zws = np.ones(n_paths)
    prev_ud = np.zeros(n_paths)
    prev_zc = np.zeros(n_paths)

    proj_count = np.zeros(n_paths, dtype=np.int64)
    ratchet_count = np.zeros(n_paths, dtype=np.int64)
    vclamp = np.zeros(n_paths, dtype=np.int64)
    min_slack = np.full(n_paths, np.inf)
    min_x = np.full(n_paths, np.inf)
    max_x = np.full(n_paths, -np.inf)
    bankrupt_step = np.full(n_paths, -1, dtype=np.int64)

    pos = 0
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in range(n_steps + 1):
            t = k * dt
            x = w / cbar
            if mode == MODE_OPTIMAL:
                m = x > a
                if m.any():
                    cbar = np.where(m, w / a, cbar)
                    x = np.where(m, a, x)
                    ratchet_count += m
                fm = x < x_floor
                if fm.any():
                    w = np.where(fm, x_floor * cbar, w)
                    x = np.where(fm, x_floor, x)
                    proj_count += fm
                theta, cons, region, v = _policy_eval(c, x, cbar, zws)
                region = np.where(m, L.REG_RATCHET, region).astype(np.int8)
            else:
                theta = pi * w
                cons = s * cbar
                v, region = _value_eval(c, x, zws, vclamp)
            np.fmin(min_x, x, out=min_x)
            np.fmax(max_x, x, out=max_x)
            np.fmin(min_slack, cons - c[L.B_FRAC] * cbar, out=min_slack)

            disc = np.exp(-rho * t)
            ud = disc * _utility(c, cons)
            zeta = np.exp((-r - 0.5 * kappa * kappa) * t - kappa * Wc)
            zc = zeta * cons
            if k > 0:
                y_int += 0.5 * dt * (prev_ud + ud)
                zc_int += 0.5 * dt * (prev_zc + zc)
            prev_ud, prev_zc = ud, zc

            if pos < n_snap and k == snap_idx[pos]:
                V = _scale_value(c, v, cbar)
                out["S"][:, pos] = S
                out["w"][:, pos] = w
                out["cbar"][:, pos] = cbar
                out["x"][:, pos] = x
                out["theta"][:, pos] = theta
                out["c"][:, pos] = cons
                out["region"][:, pos] = region
                out["V"][:, pos] = V
                out["Y"][:, pos] = y_int + disc * V
                out["zc_int"][:, pos] = zc_int
                out["Z"][:, pos] = zeta * w + zc_int
                out["W"][:, pos] = Wc
                pos += 1

            if k < n_steps:
                dw_k = dW[:, k]
                w = w + (r * w + theta * (mu - r) - cons) * dt + theta * sigma * dw_k
                S = S * np.exp((mu - 0.5 * sigma * sigma) * dt + sigma * dw_k)
                Wc = Wc + dw_k
                if mode == MODE_PROP:
                    newly = (w <= 0.0) & (bankrupt_step < 0)
                    if newly.any():
                        bankrupt_step[newly] = k + 1

    return out, {
        "proj_count": proj_count,
        "ratchet_count": ratchet_count,
        "vclamp_count": vclamp,
        "min_slack": min_slack,
        "min_x": min_x,
        "max_x": max_x,
        "bankrupt_step": bankrupt_step,
    }
