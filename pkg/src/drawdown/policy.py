"""Optimal portfolio and consumption policy as a function of (w, cbar).

The ratchet is applied first: if w / cbar > a, the running max jumps to
w / a. The stock position is theta = (mu - r)/sigma^2 * cbar * z J''(z),
and consumption follows the four-region rule keyed on x = w / cbar.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dual import DualSolution, eval_J, region_boundaries
from .errors import DomainError
from .model import ModelParams
from .primal import (
    REGION_BOUND,
    REGION_FLOOR,
    REGION_INTERIOR,
    REGION_RATCHET,
    REGION_WAIT,
    invert_dual,
)


@dataclass(frozen=True)
class PolicyDecision:
    theta: float  # wealth in the stock
    c: float  # consumption rate
    cbar_new: float  # running max after the (possible) ratchet jump
    region: str


def merton_fraction(params: ModelParams) -> float:
    """Unconstrained Merton ratio (mu - r) / (sigma^2 R)."""
    return (params.mu - params.r) / (params.sigma**2 * params.R)


def decide(sol: DualSolution, w: float, cbar: float) -> PolicyDecision:
    """Optimal (theta, c) at state (w, cbar), ratcheting cbar first."""
    if not cbar > 0.0:
        raise DomainError(f"cbar must be > 0, got {cbar}")
    p = sol.params
    bd = region_boundaries(sol)
    ratcheted = w / cbar > bd.a
    cbar_new = max(cbar, w / bd.a)
    x = w / cbar_new
    if x < bd.x_floor * (1.0 - 1e-12):
        raise DomainError(f"x={x} below the feasibility floor b/r={bd.x_floor}")

    if x <= bd.x_floor * (1.0 + 1e-14):
        # Absorbing state: interest exactly funds the constrained consumption.
        return PolicyDecision(theta=0.0, c=p.b * cbar_new, cbar_new=cbar_new, region=REGION_FLOOR)

    vp = invert_dual(sol, x)
    z = vp.vp
    pm = (p.mu - p.r) / p.sigma**2
    theta = pm * cbar_new * z * eval_J(sol, z)[2]

    if x <= bd.x_kink:
        c = p.b * cbar_new
        region = REGION_BOUND
    elif x <= bd.x_one:
        c = cbar_new / z if sol.branch == "log" else cbar_new * z ** (-1.0 / p.R)
        region = REGION_INTERIOR
    else:
        c = cbar_new
        region = REGION_RATCHET if ratcheted else REGION_WAIT
    return PolicyDecision(theta=theta, c=c, cbar_new=cbar_new, region=region)
