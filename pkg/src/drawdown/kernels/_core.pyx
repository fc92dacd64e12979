# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path-simulation kernel.

Per-path scalar loop with a warm-started safeguarded Newton solve for the
dual inversion at every step. Mirrors _pyref.run_paths; the constant
vector layout is defined in layout.py.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fmax, fmin, isfinite, log, pow

cnp.import_array()

# Constant-vector indices; keep in sync with layout.py.
cdef enum:
    LOG_BRANCH = 0
    R_RATE = 1
    MU = 2
    SIGMA = 3
    RHO = 4
    RRA = 5
    B_FRAC = 6
    KAPPA = 7
    GAMMA_M = 8
    ALPHA = 9
    BETA = 10
    RP = 11
    COEF_A = 12
    COEF_B = 13
    COEF_C = 14
    COEF_D = 15
    COEF_E = 16
    COEF_F = 17
    Z_A = 18
    Z_KINK = 19
    X_FLOOR = 20
    X_KINK = 21
    X_ONE = 22
    X_A = 23
    PM = 24
    U_FLOOR = 25
    LOG_U1_CONST = 26
    U_ONE_OVER_RHO = 27

cdef enum:
    REG_FLOOR = 0
    REG_BOUND = 1
    REG_INTERIOR = 2
    REG_WAIT = 3
    REG_RATCHET = 4

DEF SOLVE_MAX_ITER = 80
DEF SOLVE_RTOL = 1e-12


cdef inline void _jp_jpp(const double* c, double z, int piece,
                         double* jp, double* jpp) nogil:
    cdef double alpha = c[ALPHA]
    cdef double beta = c[BETA]
    cdef double za1 = pow(z, -alpha - 1.0)
    cdef double zb1 = pow(z, beta - 1.0)
    cdef double c1, c2, rp
    if piece == 1:
        c1 = c[COEF_B]; c2 = c[COEF_C]
        jp[0] = -alpha * c1 * za1 + beta * c2 * zb1 - 1.0 / c[R_RATE]
        jpp[0] = alpha * (alpha + 1.0) * c1 * za1 / z + beta * (beta - 1.0) * c2 * zb1 / z
    else:
        c1 = c[COEF_D]; c2 = c[COEF_E]
        jp[0] = -alpha * c1 * za1 + beta * c2 * zb1
        jpp[0] = alpha * (alpha + 1.0) * c1 * za1 / z + beta * (beta - 1.0) * c2 * zb1 / z
        if c[LOG_BRANCH] != 0.0:
            jp[0] -= 1.0 / (c[RHO] * z)
            jpp[0] += 1.0 / (c[RHO] * z * z)
        else:
            rp = c[RP]
            jp[0] -= pow(z, -rp) / c[GAMMA_M]
            jpp[0] += rp * pow(z, -rp - 1.0) / c[GAMMA_M]


cdef inline double _jval(const double* c, double z, int piece) nogil:
    cdef double alpha = c[ALPHA]
    cdef double beta = c[BETA]
    cdef double za = pow(z, -alpha)
    cdef double zb = pow(z, beta)
    cdef double j, rp
    if piece == 1:
        j = c[COEF_B] * za + c[COEF_C] * zb - z / c[R_RATE]
        if c[LOG_BRANCH] == 0.0:
            j += c[U_ONE_OVER_RHO]
    else:
        j = c[COEF_D] * za + c[COEF_E] * zb
        if c[LOG_BRANCH] != 0.0:
            j -= (log(z) + 1.0) / c[RHO] + c[LOG_U1_CONST]
        else:
            rp = c[RP]
            j -= pow(z, 1.0 - rp) / ((1.0 - rp) * c[GAMMA_M])
    return j


cdef inline double _solve(const double* c, double x, int piece,
                          double z0, double lo, double hi, double* jpp_out) nogil:
    """Warm-started Newton with bisection safeguard for J'(z) = -x."""
    cdef double z = z0
    cdef double lov = lo
    cdef double hiv = hi
    cdef double tol = SOLVE_RTOL * fmax(1.0, x)
    cdef double jp, jpp, f, zn
    cdef int it
    if z < lov:
        z = lov
    elif z > hiv:
        z = hiv
    for it in range(SOLVE_MAX_ITER):
        _jp_jpp(c, z, piece, &jp, &jpp)
        f = jp + x
        if f < 0.0:
            if -f <= tol:
                break
            if z > lov:
                lov = z
        else:
            if f <= tol:
                break
            if z < hiv:
                hiv = z
        zn = z - f / jpp
        if not isfinite(zn) or zn <= lov or zn >= hiv:
            zn = 0.5 * (lov + hiv)
        z = zn
    jpp_out[0] = jpp
    return z


cdef inline double _utility(const double* c, double cons) nogil:
    if c[LOG_BRANCH] != 0.0:
        return log(cons)
    return pow(cons, 1.0 - c[RRA]) / (1.0 - c[RRA])


cdef inline double _scale_value(const double* c, double v, double cbar) nogil:
    if c[LOG_BRANCH] != 0.0:
        return v + log(cbar) / c[RHO]
    return pow(cbar, 1.0 - c[RRA]) * v


cdef inline double _ratchet_region_value(const double* c, double x) nogil:
    cdef double R, rp
    if c[LOG_BRANCH] != 0.0:
        return (log(x) + 1.0 + log(c[RHO])) / c[RHO] + c[COEF_A]
    R = c[RRA]; rp = c[RP]
    return pow(x, 1.0 - R) / (1.0 - R) * pow(-c[COEF_A] * (1.0 - rp), 1.0 / rp)


def run_paths(int mode, double pi, double s,
              cnp.ndarray[cnp.float64_t, ndim=2] dW,
              double w0, double cbar0, double dt,
              cnp.ndarray[cnp.float64_t, ndim=1] cvec,
              cnp.ndarray[cnp.int64_t, ndim=1] snap_idx):
    """Simulate all paths; same contract as _pyref.run_paths."""
    cdef Py_ssize_t n_paths = dW.shape[0]
    cdef Py_ssize_t n_steps = dW.shape[1]
    cdef Py_ssize_t n_snap = snap_idx.shape[0]

    out = {name: np.empty((n_paths, n_snap))
           for name in ("S", "w", "cbar", "x", "theta", "c", "Y", "V",
                        "zc_int", "Z", "W")}
    out["region"] = np.empty((n_paths, n_snap), dtype=np.int8)

    diag = {
        "proj_count": np.zeros(n_paths, dtype=np.int64),
        "ratchet_count": np.zeros(n_paths, dtype=np.int64),
        "vclamp_count": np.zeros(n_paths, dtype=np.int64),
        "min_slack": np.full(n_paths, np.inf),
        "min_x": np.full(n_paths, np.inf),
        "max_x": np.full(n_paths, -np.inf),
        "bankrupt_step": np.full(n_paths, -1, dtype=np.int64),
    }

    cdef double[:, :] o_S = out["S"]
    cdef double[:, :] o_w = out["w"]
    cdef double[:, :] o_cbar = out["cbar"]
    cdef double[:, :] o_x = out["x"]
    cdef double[:, :] o_theta = out["theta"]
    cdef double[:, :] o_c = out["c"]
    cdef double[:, :] o_Y = out["Y"]
    cdef double[:, :] o_V = out["V"]
    cdef double[:, :] o_zc = out["zc_int"]
    cdef double[:, :] o_Z = out["Z"]
    cdef double[:, :] o_W = out["W"]
    cdef signed char[:, :] o_reg = out["region"]

    cdef long long[:] d_proj = diag["proj_count"]
    cdef long long[:] d_ratch = diag["ratchet_count"]
    cdef long long[:] d_vclamp = diag["vclamp_count"]
    cdef double[:] d_slack = diag["min_slack"]
    cdef double[:] d_minx = diag["min_x"]
    cdef double[:] d_maxx = diag["max_x"]
    cdef long long[:] d_bank = diag["bankrupt_step"]

    cdef double[:, :] dWv = dW
    cdef long long[:] snaps = snap_idx
    cdef const double* c = &cvec[0]

    cdef double r = c[R_RATE], mu = c[MU], sigma = c[SIGMA], rho = c[RHO]
    cdef double kappa = c[KAPPA], a = c[X_A], x_floor = c[X_FLOOR]
    cdef double x_kink = c[X_KINK], x_one = c[X_ONE], b = c[B_FRAC]
    cdef double gbm_drift = (mu - 0.5 * sigma * sigma) * dt
    cdef double zeta_rate = -r - 0.5 * kappa * kappa

    cdef Py_ssize_t i, k, pos
    cdef int reg, ratcheted, bankrupt
    cdef double w, cbar, S, Wc, y_int, zc_int, zws, prev_ud, prev_zc
    cdef double t, x, theta, cons, v, u, z, jpp, ud, zeta, zc, disc, dw_k, V, slack

    with nogil:
        for i in range(n_paths):
            w = w0; cbar = cbar0; S = 1.0; Wc = 0.0
            y_int = 0.0; zc_int = 0.0; zws = 1.0
            prev_ud = 0.0; prev_zc = 0.0
            pos = 0
            bankrupt = 0
            for k in range(n_steps + 1):
                t = k * dt
                x = w / cbar
                ratcheted = 0
                if mode == 0:
                    if x > a:
                        cbar = w / a
                        x = a
                        d_ratch[i] += 1
                        ratcheted = 1
                    if x < x_floor:
                        w = x_floor * cbar
                        x = x_floor
                        d_proj[i] += 1

                    # optimal policy at x in [b/r, a]
                    if x <= x_floor * (1.0 + 1e-14):
                        theta = 0.0
                        cons = b * cbar
                        v = c[U_FLOOR]
                        reg = REG_FLOOR
                    elif x <= x_kink:
                        u = x - x_floor
                        theta = c[PM] * cbar * (c[ALPHA] + 1.0) * u
                        cons = b * cbar
                        v = c[COEF_F] * (1.0 + c[ALPHA]) * pow(
                            u / (c[ALPHA] * c[COEF_F]), c[ALPHA] / (1.0 + c[ALPHA])
                        ) + c[U_FLOOR]
                        reg = REG_BOUND
                    elif x <= x_one:
                        z = _solve(c, x, 2, zws, 1.0, c[Z_KINK], &jpp)
                        zws = z
                        theta = c[PM] * cbar * z * jpp
                        if c[LOG_BRANCH] != 0.0:
                            cons = cbar / z
                        else:
                            cons = cbar * pow(z, -c[RP])
                        v = _jval(c, z, 2) + x * z
                        reg = REG_INTERIOR
                    else:
                        z = _solve(c, x, 1, zws, c[Z_A], 1.0, &jpp)
                        zws = z
                        theta = c[PM] * cbar * z * jpp
                        cons = cbar
                        v = _jval(c, z, 1) + x * z
                        reg = REG_RATCHET if ratcheted else REG_WAIT
                else:
                    # constant-proportion user strategy
                    theta = pi * w
                    cons = s * cbar
                    if x < x_floor * (1.0 - 1e-12):
                        d_vclamp[i] += 1
                        v = c[U_FLOOR]
                        reg = REG_FLOOR
                    elif x <= x_floor * (1.0 + 1e-14):
                        v = c[U_FLOOR]
                        reg = REG_FLOOR
                    elif x <= x_kink:
                        u = x - x_floor
                        v = c[COEF_F] * (1.0 + c[ALPHA]) * pow(
                            u / (c[ALPHA] * c[COEF_F]), c[ALPHA] / (1.0 + c[ALPHA])
                        ) + c[U_FLOOR]
                        reg = REG_BOUND
                    elif x <= x_one:
                        z = _solve(c, x, 2, zws, 1.0, c[Z_KINK], &jpp)
                        zws = z
                        v = _jval(c, z, 2) + x * z
                        reg = REG_INTERIOR
                    elif x <= a:
                        z = _solve(c, x, 1, zws, c[Z_A], 1.0, &jpp)
                        zws = z
                        v = _jval(c, z, 1) + x * z
                        reg = REG_WAIT
                    else:
                        v = _ratchet_region_value(c, x)
                        reg = REG_RATCHET

                if x < d_minx[i]:
                    d_minx[i] = x
                if x > d_maxx[i]:
                    d_maxx[i] = x
                slack = cons - b * cbar
                if slack < d_slack[i]:
                    d_slack[i] = slack

                disc = exp(-rho * t)
                ud = disc * _utility(c, cons)
                zeta = exp(zeta_rate * t - kappa * Wc)
                zc = zeta * cons
                if k > 0:
                    y_int += 0.5 * dt * (prev_ud + ud)
                    zc_int += 0.5 * dt * (prev_zc + zc)
                prev_ud = ud
                prev_zc = zc

                if pos < n_snap and k == snaps[pos]:
                    V = _scale_value(c, v, cbar)
                    o_S[i, pos] = S
                    o_w[i, pos] = w
                    o_cbar[i, pos] = cbar
                    o_x[i, pos] = x
                    o_theta[i, pos] = theta
                    o_c[i, pos] = cons
                    o_reg[i, pos] = <signed char> reg
                    o_V[i, pos] = V
                    o_Y[i, pos] = y_int + disc * V
                    o_zc[i, pos] = zc_int
                    o_Z[i, pos] = zeta * w + zc_int
                    o_W[i, pos] = Wc
                    pos += 1

                if k < n_steps:
                    dw_k = dWv[i, k]
                    w = w + (r * w + theta * (mu - r) - cons) * dt + theta * sigma * dw_k
                    S = S * exp(gbm_drift + sigma * dw_k)
                    Wc = Wc + dw_k
                    if mode == 1 and w <= 0.0 and not bankrupt:
                        d_bank[i] = k + 1
                        bankrupt = 1

    return out, diag
