"""Flat constant vector shared by the compiled and pure-Python kernels."""

from __future__ import annotations

import math

import numpy as np

from ..dual import DualSolution, region_boundaries

# Indices into the constant vector.
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
PM = 24  # (mu - r) / sigma^2
U_FLOOR = 25  # v at the feasibility floor = U(b) / rho
LOG_U1_CONST = 26  # log branch: (rho - r - kappa^2/2) / rho^2
U_ONE_OVER_RHO = 27  # power branch: U(1) / rho
N_CONST = 28

# Region codes recorded per step (primal tags, in x order).
REG_FLOOR = 0
REG_BOUND = 1
REG_INTERIOR = 2
REG_WAIT = 3
REG_RATCHET = 4

REGION_NAMES = ("floor", "drawdown-bound", "interior", "ratchet-wait", "ratchet")


def pack(sol: DualSolution) -> np.ndarray:
    """Pack a DualSolution into the flat float64 vector the kernels read."""
    p, d = sol.params, sol.derived
    bd = region_boundaries(sol)
    c = np.zeros(N_CONST, dtype=np.float64)
    c[LOG_BRANCH] = 1.0 if sol.branch == "log" else 0.0
    c[R_RATE] = p.r
    c[MU] = p.mu
    c[SIGMA] = p.sigma
    c[RHO] = p.rho
    c[RRA] = p.R
    c[B_FRAC] = p.b
    c[KAPPA] = d.kappa
    c[GAMMA_M] = d.gamma_M
    c[ALPHA] = d.alpha
    c[BETA] = d.beta
    c[RP] = d.R_prime
    c[COEF_A] = sol.A
    c[COEF_B] = sol.B
    c[COEF_C] = sol.C
    c[COEF_D] = sol.D
    c[COEF_E] = sol.E
    c[COEF_F] = sol.F
    c[Z_A] = sol.z_a
    c[Z_KINK] = sol.z_kink
    c[X_FLOOR] = bd.x_floor
    c[X_KINK] = bd.x_kink
    c[X_ONE] = bd.x_one
    c[X_A] = bd.a
    c[PM] = (p.mu - p.r) / p.sigma**2
    c[U_FLOOR] = p.utility(p.b) / p.rho
    if sol.branch == "log":
        c[LOG_U1_CONST] = (p.rho - p.r - 0.5 * d.kappa**2) / p.rho**2
        c[U_ONE_OVER_RHO] = 0.0
    else:
        c[LOG_U1_CONST] = 0.0
        c[U_ONE_OVER_RHO] = p.utility(1.0) / p.rho
    return c
