"""Scaled value function v(x) and full value function V(w, cbar).

v is recovered from the dual by Legendre inversion,
v(x) = inf_z { J(z) + x z }, solved by bisection in log z on the inner
regions and by closed forms at the floor and in the ratchet region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import dual as _dual
from .dual import Z_MAX, DualSolution, RegionBoundaries, eval_J, region_boundaries
from .errors import DomainError, InvalidParams

REGION_FLOOR = "floor"
REGION_BOUND = "drawdown-bound"
REGION_INTERIOR = "interior"
REGION_WAIT = "ratchet-wait"
REGION_RATCHET = "ratchet"

# |(-J'(z)) - x| <= INVERT_RTOL * x terminates the inversion.
INVERT_RTOL = 1e-12
_INVERT_MAX_ITER = 200


@dataclass(frozen=True)
class ValuePoint:
    """One evaluation of the scaled value function."""

    x: float
    v: float
    vp: float  # v'(x) = z
    region: str


def _region_tag(x: float, bd: RegionBoundaries) -> str:
    if x <= bd.x_kink:
        return REGION_BOUND
    if x <= bd.x_one:
        return REGION_INTERIOR
    if x <= bd.a:
        return REGION_WAIT
    return REGION_RATCHET


def floor_value(sol: DualSolution) -> float:
    """v at the feasibility floor: U(b) / rho."""
    p = sol.params
    return p.utility(p.b) / p.rho


def ratchet_value(sol: DualSolution, x: float) -> float:
    """Explicit v(x) for x >= a (the ratchet region)."""
    p, d = sol.params, sol.derived
    if sol.branch == "log":
        return (math.log(x) + 1.0 + math.log(p.rho)) / p.rho + sol.A
    Rp = d.R_prime
    return p.utility(x) * (-sol.A * (1.0 - Rp)) ** (1.0 / Rp)


def drawdown_bound_value(sol: DualSolution, x: float) -> float:
    """Explicit v(x) for b/r <= x <= x_kink (minimal-consumption region)."""
    p, d = sol.params, sol.derived
    Rs = d.R_star
    return (x - p.b / p.r) ** (1.0 - Rs) / (1.0 - Rs) * (d.alpha * sol.F) ** Rs + floor_value(sol)


def _invert_z(sol: DualSolution, x: float, bd: RegionBoundaries) -> float:
    """Solve -J'(z) = x for z in [z_a, Z_MAX] by bisection in log z."""
    lo, hi = math.log(sol.z_a), math.log(Z_MAX)
    z = sol.z_a
    # Run to interval exhaustion: near the floor the map z -> -J'(z) is very
    # flat, so an x-residual stop alone leaves z orders of magnitude off.
    for _ in range(_INVERT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        z = math.exp(mid)
        fx = -eval_J(sol, z)[1]
        if abs(fx - x) <= INVERT_RTOL * x and hi - lo <= 1e-14:
            return z
        if fx > x:  # -J' is decreasing in z
            lo = mid
        else:
            hi = mid
    z = math.exp(0.5 * (lo + hi))
    fx = -eval_J(sol, z)[1]
    if abs(fx - x) <= 1e-9 * x:
        return z
    raise DomainError(f"dual inversion failed to converge at x={x} (last z={z})")


def invert_dual(sol: DualSolution, x: float) -> ValuePoint:
    """Evaluate v at x >= b/r via Legendre inversion of J.

    x = b/r maps to the closed boundary value; x > a uses the explicit
    ratchet form; the rest is numeric inversion of the strictly
    decreasing map z -> -J'(z).
    """
    bd = region_boundaries(sol)
    if x < bd.x_floor * (1.0 - 1e-12):
        raise DomainError(f"x={x} below the feasibility floor b/r={bd.x_floor}")
    if x <= bd.x_floor * (1.0 + 1e-14):
        return ValuePoint(x=x, v=floor_value(sol), vp=math.inf, region=REGION_FLOOR)
    if x > bd.a * (1.0 + 1e-12):
        return ValuePoint(x=x, v=ratchet_value(sol, x), vp=_ratchet_slope(sol, x), region=REGION_RATCHET)
    z = _invert_z(sol, x, bd)
    J = eval_J(sol, z)[0]
    return ValuePoint(x=x, v=J + x * z, vp=z, region=_region_tag(x, bd))


def _ratchet_slope(sol: DualSolution, x: float) -> float:
    """v'(x) in the ratchet region (z < z_a piece of the dual)."""
    p, d = sol.params, sol.derived
    if sol.branch == "log":
        return 1.0 / (p.rho * x)
    Rp = d.R_prime
    return x ** (-p.R) * (-sol.A * (1.0 - Rp)) ** (1.0 / Rp)


def value_function(sol: DualSolution, w: float, cbar: float) -> float:
    """Full value V(w, cbar), scaled per utility branch."""
    if not cbar > 0.0:
        raise InvalidParams(f"cbar must be > 0, got {cbar}")
    vp = invert_dual(sol, w / cbar)
    if sol.branch == "log":
        return vp.v + math.log(cbar) / sol.params.rho
    return cbar ** (1.0 - sol.params.R) * vp.v


def v_grid(sol: DualSolution, x_lo: float, x_hi: float, n: int) -> list[ValuePoint]:
    """n evenly spaced evaluations of v on [x_lo, x_hi]."""
    bd = region_boundaries(sol)
    if n < 2:
        raise InvalidParams(f"grid needs n >= 2, got {n}")
    if not bd.x_floor * (1.0 - 1e-12) <= x_lo < x_hi:
        raise DomainError(f"grid bounds [{x_lo}, {x_hi}] invalid (floor {bd.x_floor})")
    step = (x_hi - x_lo) / (n - 1)
    return [invert_dual(sol, x_lo + i * step) for i in range(n)]
