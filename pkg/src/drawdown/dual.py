"""Closed-form piecewise dual function J(z) and its free boundary.

J is the concave conjugate of the scaled value function v. It satisfies a
piecewise linear ODE system with four pieces separated by the knots
z_a < 1 < z_kink, where z_kink = b^(-R) on the power branch and 1/b on the
log branch. All coefficients have closed forms except the free boundary
z_a, which is the unique root in (0, 1) of a scalar equation solved here by
bisection plus a Newton polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, OrderingViolation, RootNotBracketed
from .model import DerivedConstants, ModelParams

# Evaluation cap: the analytic last piece is valid on [z_kink, inf); the cap
# only guards z^beta overflow in the middle pieces during grid sweeps.
Z_MAX = 1e9

# Dual piece ids, ordered by z.
PIECE_RATCHET = 0  # 0 < z <= z_a
PIECE_WAIT = 1  # z_a <= z <= 1
PIECE_INTERIOR = 2  # 1 <= z <= z_kink
PIECE_BOUND = 3  # z_kink <= z < inf


@dataclass(frozen=True)
class DualSolution:
    """Coefficients and knots of the piecewise dual function."""

    branch: str  # "power" | "log"
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float
    G: float
    z_a: float
    z_kink: float
    derived: DerivedConstants
    params: ModelParams

    @property
    def knots(self) -> tuple[float, float, float]:
        return (self.z_a, 1.0, self.z_kink)


@dataclass(frozen=True)
class RegionBoundaries:
    """Primal thresholds: b/r < x_kink < x_one < a."""

    x_floor: float
    x_kink: float
    x_one: float
    a: float


def _za_equation(sol_C: float, derived: DerivedConstants, params: ModelParams):
    """Return (g, g') for the free-boundary equation, per utility branch."""
    alpha, beta = derived.alpha, derived.beta
    r, rho, R = params.r, params.rho, params.R
    if params.utility_branch == "log":
        k = beta * (alpha + beta) * sol_C
    else:
        k = (alpha + beta) * (R * (beta - 1.0) + 1.0) * sol_C

    def g(z: float) -> float:
        return k * z**beta - (alpha + 1.0) * z / r + alpha / rho

    def gp(z: float) -> float:
        return k * beta * z ** (beta - 1.0) - (alpha + 1.0) / r

    return g, gp


def find_za(C: float, derived: DerivedConstants, params: ModelParams) -> float:
    """Free boundary z_a in (0, 1): bisection bracket, then Newton polish."""
    g, gp = _za_equation(C, derived, params)
    lo, hi = 1e-12, 1.0 - 1e-12
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0.0:
        raise RootNotBracketed(
            f"free-boundary equation has no sign change on (0,1): g({lo})={glo}, g({hi})={ghi}"
        )
    tol = 1e-12 * max(1.0, derived.alpha / params.rho)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            lo = hi = mid
            break
        if glo * gm < 0.0:
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
        if hi - lo < 1e-15:
            break
    z = 0.5 * (lo + hi)
    for _ in range(8):
        gz = g(z)
        if abs(gz) <= tol:
            break
        dz = gz / gp(z)
        z_new = z - dz
        if not (lo <= z_new <= hi):  # keep the bisection bracket authoritative
            break
        z = z_new
    if abs(g(z)) > tol:
        raise RootNotBracketed(f"free-boundary polish stalled at z={z}, g={g(z)}")
    return z


def solve_coefficients(derived: DerivedConstants, params: ModelParams) -> DualSolution:
    """All dual coefficients from their closed forms; G = 0 exactly."""
    alpha, beta, gm = derived.alpha, derived.beta, derived.gamma_M
    r, rho, R, b = params.r, params.rho, params.R, params.b
    ab = alpha + beta

    if params.utility_branch == "log":
        bracket_C = alpha / rho - (alpha + 1.0) / r
        C = (b**beta - 1.0) / (beta * ab) * bracket_C
        z_a = find_za(C, derived, params)
        A = (
            (beta / rho - (beta - 1.0) * z_a / r) / (alpha * ab)
            + ((alpha + 1.0) * z_a / r - alpha / rho) / (beta * ab)
            - z_a / r
            + math.log(z_a) / rho
        )
        B = z_a**alpha / (alpha * ab) * (beta / rho - (beta - 1.0) * z_a / r)
        D = B + ((beta - 1.0) / r - beta / rho) / (alpha * ab)
        E = b**beta / (beta * ab) * bracket_C
        F = B + (b**-alpha - 1.0) / (alpha * ab) * (beta / rho - (beta - 1.0) / r)
        z_kink = 1.0 / b
    else:
        Rp = derived.R_prime
        bracket_CE = (R * (alpha + 1.0) - 1.0) / (R * gm) - (alpha + 1.0) / r
        C = (b ** (1.0 + R * (beta - 1.0)) - 1.0) / (beta * ab) * bracket_CE
        z_a = find_za(C, derived, params)
        A = z_a ** (Rp - 1.0) / gm * (1.0 / (1.0 - R) - z_a)
        B = z_a**alpha / (ab * (R * (alpha + 1.0) - 1.0)) * (
            beta / rho + (1.0 - beta) * z_a / r
        )
        bracket_DF = (beta - 1.0) / r - (1.0 + R * (beta - 1.0)) / (R * gm)
        D = B + bracket_DF / (alpha * ab)
        E = b ** (1.0 + R * (beta - 1.0)) / (beta * ab) * bracket_CE
        F = B + (1.0 - b ** (1.0 - R * (alpha + 1.0))) / (alpha * ab) * bracket_DF
        z_kink = b**-R

    return DualSolution(
        branch=params.utility_branch,
        A=A, B=B, C=C, D=D, E=E, F=F, G=0.0,
        z_a=z_a,
        z_kink=z_kink,
        derived=derived,
        params=params,
    )


def _piece_index(sol: DualSolution, z: float) -> int:
    if z <= sol.z_a:
        return PIECE_RATCHET
    if z <= 1.0:
        return PIECE_WAIT
    if z <= sol.z_kink:
        return PIECE_INTERIOR
    return PIECE_BOUND


def eval_piece(sol: DualSolution, z: float, piece: int) -> tuple[float, float, float]:
    """(J, J', J'') of one analytic piece, evaluated at z regardless of knots."""
    d, p = sol.derived, sol.params
    alpha, beta = d.alpha, d.beta
    r, rho = p.r, p.rho
    log_branch = sol.branch == "log"

    if piece == PIECE_RATCHET:
        if log_branch:
            return (-math.log(z) / rho + sol.A, -1.0 / (rho * z), 1.0 / (rho * z * z))
        Rp = d.R_prime
        J = sol.A * z ** (1.0 - Rp)
        Jp = sol.A * (1.0 - Rp) * z**-Rp
        Jpp = -sol.A * (1.0 - Rp) * Rp * z ** (-Rp - 1.0)
        return (J, Jp, Jpp)

    za_m = z ** (-alpha)
    zb = z**beta
    if piece == PIECE_WAIT:
        c1, c2 = sol.B, sol.C
        if log_branch:
            Jh = -z / r
            Jhp = -1.0 / r
            Jhpp = 0.0
        else:
            Jh = -z / r + p.utility(1.0) / rho
            Jhp = -1.0 / r
            Jhpp = 0.0
    elif piece == PIECE_INTERIOR:
        c1, c2 = sol.D, sol.E
        if log_branch:
            Jh = -(math.log(z) + 1.0) / rho - (rho - r - 0.5 * d.kappa**2) / rho**2
            Jhp = -1.0 / (rho * z)
            Jhpp = 1.0 / (rho * z * z)
        else:
            Rp = d.R_prime
            Jh = -(z ** (1.0 - Rp)) / ((1.0 - Rp) * d.gamma_M)
            Jhp = -(z**-Rp) / d.gamma_M
            Jhpp = Rp * z ** (-Rp - 1.0) / d.gamma_M
    elif piece == PIECE_BOUND:
        c1, c2 = sol.F, sol.G
        ub = math.log(p.b) if log_branch else p.utility(p.b)
        Jh = -p.b / r * z + ub / rho
        Jhp = -p.b / r
        Jhpp = 0.0
    else:
        raise DomainError(f"unknown dual piece {piece}")

    J = c1 * za_m + c2 * zb + Jh
    Jp = -alpha * c1 * za_m / z + beta * c2 * zb / z + Jhp
    Jpp = alpha * (alpha + 1.0) * c1 * za_m / (z * z) + beta * (beta - 1.0) * c2 * zb / (z * z) + Jhpp
    return (J, Jp, Jpp)


def eval_J(sol: DualSolution, z: float) -> tuple[float, float, float, int]:
    """Evaluate (J, J', J'', piece_id) at z > 0."""
    if not z > 0.0:
        raise DomainError(f"J(z) requires z > 0, got z={z}")
    piece = _piece_index(sol, z)
    J, Jp, Jpp = eval_piece(sol, z, piece)
    return (J, Jp, Jpp, piece)


def region_boundaries(sol: DualSolution) -> RegionBoundaries:
    """Primal thresholds -J' at the knots; raises if the ordering breaks."""
    x_floor = sol.params.b / sol.params.r
    a = -eval_J(sol, sol.z_a)[1]
    x_one = -eval_J(sol, 1.0)[1]
    x_kink = -eval_J(sol, sol.z_kink)[1]
    if not (x_floor < x_kink < x_one < a):
        raise OrderingViolation(
            f"boundary ordering failed: b/r={x_floor}, x_kink={x_kink}, "
            f"x_one={x_one}, a={a}"
        )
    return RegionBoundaries(x_floor=x_floor, x_kink=x_kink, x_one=x_one, a=a)


def _forcing(sol: DualSolution, z: float, piece: int) -> float:
    """Inhomogeneous term of the governing ODE on each outer piece."""
    p = sol.params
    log_branch = sol.branch == "log"
    if piece == PIECE_WAIT:
        return (0.0 if log_branch else p.utility(1.0)) - z
    if piece == PIECE_INTERIOR:
        if log_branch:
            return -math.log(z) - 1.0  # sup_s { log s - z s }
        Rp = sol.derived.R_prime
        return -(z ** (1.0 - Rp)) / (1.0 - Rp)
    if piece == PIECE_BOUND:
        ub = math.log(p.b) if log_branch else p.utility(p.b)
        return ub - p.b * z
    raise DomainError(f"no forcing term for piece {piece}")


def ode_residual(sol: DualSolution, z: float) -> float:
    """Governing-ODE residual at z, normalized by max(1, |J(z)|).

    Raises DomainError at z <= 0 or within 1e-14 (relative) of a knot,
    where the piece assignment is ambiguous.
    """
    if not z > 0.0:
        raise DomainError(f"residual requires z > 0, got z={z}")
    for knot in (sol.z_a, 1.0, sol.z_kink):
        if abs(z - knot) <= 1e-14 * max(1.0, knot):
            raise DomainError(f"z={z} collides with knot {knot}")
    J, Jp, Jpp, piece = eval_J(sol, z)
    p, d = sol.params, sol.derived
    if piece == PIECE_RATCHET:
        if sol.branch == "log":
            lhs = 1.0 / p.rho + Jp * z
        else:
            lhs = (1.0 - p.R) * J + p.R * Jp * z
    else:
        lhs = (
            -p.rho * J
            + (p.rho - p.r) * z * Jp
            + 0.5 * d.kappa**2 * z * z * Jpp
            + _forcing(sol, z, piece)
        )
    return lhs / max(1.0, abs(J))
