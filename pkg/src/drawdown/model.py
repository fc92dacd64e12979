"""Problem inputs and derived market constants.

The market is a risk-free account at rate r plus one lognormal stock
(drift mu, volatility sigma). Preferences are CRRA with risk aversion R,
discounted at rho, and consumption may never fall below the fraction b of
its own running maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IllPosed, InvalidParams

# R values this close to 1 are routed to the log-utility branch: the power
# branch divides by 1 - R and by 1 - 1/R, which cancel catastrophically there.
LOG_BRANCH_TOL = 1e-12

_PARAM_KEYS = ("r", "mu", "sigma", "rho", "R", "b")


@dataclass(frozen=True)
class ModelParams:
    """Market and preference inputs.

    r : risk-free rate, mu : stock drift, sigma : stock volatility,
    rho : utility discount rate, R : relative risk aversion,
    b : drawdown fraction in (0, 1).
    """

    r: float
    mu: float
    sigma: float
    rho: float
    R: float
    b: float

    @property
    def utility_branch(self) -> str:
        return "log" if abs(self.R - 1.0) <= LOG_BRANCH_TOL else "power"

    def utility(self, c: float) -> float:
        """CRRA utility U(c)."""
        if self.utility_branch == "log":
            return math.log(c)
        return c ** (1.0 - self.R) / (1.0 - self.R)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants computed from ModelParams.

    kappa : market price of risk (mu - r) / sigma
    gamma_M : Merton consumption rate; positive iff the problem is well-posed
    R_star : critical risk aversion, in (0, 1)
    alpha, beta : -alpha < 0 < 1 < beta are the roots of
        Q(t) = 0.5 kappa^2 t (t - 1) + (rho - r) t - rho
    R_prime : 1 / R
    """

    kappa: float
    gamma_M: float
    R_star: float
    alpha: float
    beta: float
    R_prime: float


def validate(params: ModelParams) -> list[str]:
    """Return the list of field-level bound violations (empty iff valid)."""
    v = []
    if not params.r > 0:
        v.append("r must be > 0")
    if not params.mu > params.r:
        v.append("mu must be > r")
    if not params.sigma > 0:
        v.append("sigma must be > 0")
    if not params.rho > 0:
        v.append("rho must be > 0")
    if not params.R > 0:
        v.append("R must be > 0")
    if not 0.0 < params.b < 1.0:
        v.append("b must lie in (0,1)")
    return v


def eval_Q(t: float, params: ModelParams) -> float:
    """Q(t) = 0.5 kappa^2 t (t - 1) + (rho - r) t - rho."""
    kappa = (params.mu - params.r) / params.sigma
    return 0.5 * kappa * kappa * t * (t - 1.0) + (params.rho - params.r) * t - params.rho


def _quadratic_roots(kappa: float, r: float, rho: float) -> tuple[float, float]:
    """Roots (-alpha, beta) of Q via the cancellation-free quadratic formula."""
    a2 = 0.5 * kappa * kappa
    b2 = rho - r - a2
    c2 = -rho
    disc = b2 * b2 - 4.0 * a2 * c2  # = b2^2 + 2 kappa^2 rho > 0
    sq = math.sqrt(disc)
    q = -0.5 * (b2 + math.copysign(sq, b2))
    r1 = q / a2
    r2 = c2 / q
    lo, hi = min(r1, r2), max(r1, r2)
    return lo, hi  # (-alpha, beta)


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Compute derived constants without the well-posedness check.

    Field-level validation still applies. Use derive() unless you
    deliberately want R <= R* (the ill-posedness demo does).
    """
    violations = validate(params)
    if violations:
        raise InvalidParams(violations)

    r, rho, R = params.r, params.rho, params.R
    kappa = (params.mu - r) / params.sigma
    gamma_M = (rho - (1.0 - R) * (r + kappa * kappa / (2.0 * R))) / R

    s = rho - r + 0.5 * kappa * kappa
    root = math.sqrt(s * s + 2.0 * r * kappa * kappa)
    # Two algebraically equal forms; pick the one without cancellation.
    if s >= 0.0:
        R_star = kappa * kappa / (s + root)
    else:
        R_star = (-s + root) / (2.0 * r)

    neg_alpha, beta = _quadratic_roots(kappa, r, rho)
    return DerivedConstants(
        kappa=kappa,
        gamma_M=gamma_M,
        R_star=R_star,
        alpha=-neg_alpha,
        beta=beta,
        R_prime=1.0 / R,
    )


def derive(params: ModelParams) -> DerivedConstants:
    """Validate, compute derived constants, and enforce R > R*.

    Raises InvalidParams on field bounds, IllPosed when R <= R* (the
    constants are computed first, so the message can report R*).
    """
    derived = derive_constants(params)
    if params.R <= derived.R_star:
        raise IllPosed(
            f"R = {params.R} <= R* = {derived.R_star}: "
            "the problem is ill-posed (gamma_M <= 0)"
        )
    return derived


def params_from_dict(obj: dict) -> ModelParams:
    """Build ModelParams from a JSON-style dict with exactly the model keys.

    Unknown keys are rejected so config typos fail loudly.
    """
    if not isinstance(obj, dict):
        raise InvalidParams("parameter config must be a JSON object")
    unknown = sorted(set(obj) - set(_PARAM_KEYS))
    if unknown:
        raise InvalidParams([f"unknown parameter key: {k}" for k in unknown])
    missing = [k for k in _PARAM_KEYS if k not in obj]
    if missing:
        raise InvalidParams([f"missing parameter key: {k}" for k in missing])
    bad = [k for k in _PARAM_KEYS if not isinstance(obj[k], (int, float)) or isinstance(obj[k], bool)]
    if bad:
        raise InvalidParams([f"parameter {k} must be a number" for k in bad])
    return ModelParams(**{k: float(obj[k]) for k in _PARAM_KEYS})
