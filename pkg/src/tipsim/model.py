"""Closed-form and fixed-point models of tip-pool size and expiration orphanage.

Stationarity threshold: with honest share mu and k references per block the
pool drifts by at least 1 - mu*k per arrival, so it diverges for mu*k <= 1
and is stationary above.  Without expiration the stationary size is
mu*k/(mu*k - 1) * lambda * h.  With an expiration window delta the size is
L0 * lambda where L0 solves

    L0 = mu*k*h / (mu*k - 1 + exp(-delta*mu*k/L0)),

and the per-block expiration probability is exp(-delta*mu*k/L0), bounded
above by exp(-delta*(mu*k - 1)/h) whenever mu*k > 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Stability(Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


class UnstableRegimeError(ValueError):
    """The requested closed form does not exist for mu*k <= 1."""


@dataclass(frozen=True)
class RegimeParams:
    mu: float
    k: int
    h: float = 1.0
    lam: float = 100.0
    delta: float | None = 100.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive or None")


@dataclass(frozen=True)
class AnalyticPrediction:
    stability: Stability
    drift_lower_bound: float
    l0_per_lambda: float | None
    tip_pool_size: float | None
    expiration_probability: float | None
    expiration_upper_bound: float | None


def classify_stability(params: RegimeParams) -> tuple[Stability, float]:
    """Stability class plus the per-arrival drift lower bound 1 - mu*k."""
    mk = params.mu * params.k
    stability = Stability.STABLE if mk > 1.0 else Stability.UNSTABLE
    return stability, 1.0 - mk


def tip_pool_no_expiration(params: RegimeParams) -> float:
    """Stationary pool size mu*k/(mu*k-1) * lambda * h; needs mu*k > 1."""
    mk = params.mu * params.k
    if mk <= 1.0:
        raise UnstableRegimeError(f"mu*k = {mk:g} <= 1: the tip pool diverges")
    return mk / (mk - 1.0) * params.lam * params.h


def solve_l0(params: RegimeParams) -> float:
    """Tips-per-rate constant L0 under expiration, by bracketing bisection.

    Finds the unique root of f(L) = L*(mu*k - 1 + exp(-delta*mu*k/L)) - mu*k*h
    on (0, inf).  f(0+) = -mu*k*h < 0 and f -> +inf, and f crosses zero once,
    so bisection on an expanding bracket always converges.  For mu = 0 every
    block lives exactly h + delta as a tip, the analytic limit.
    """
    if params.delta is None:
        raise ValueError("solve_l0 requires a finite expiration window")
    h, delta = params.h, params.delta
    if params.mu == 0.0:
        return h + delta
    mk = params.mu * params.k
    mkh = mk * h

    def f(L: float) -> float:
        return L * (mk - 1.0 + math.exp(-delta * mk / L)) - mkh

    lo = h * 1e-6
    while f(lo) >= 0.0:  # paranoia: shrink toward the guaranteed-negative limit
        lo *= 0.5
        if lo < 1e-300:
            raise ArithmeticError("bisection bracket collapsed at the low end")
    hi = 2.0 * (h + delta)
    if mk != 1.0:
        hi = max(hi, 4.0 * h * mk / abs(mk - 1.0))
    while f(hi) <= 0.0:
        hi *= 2.0
        if not math.isfinite(hi):
            raise ArithmeticError("bisection bracket expansion diverged")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # float64 resolution reached
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if not math.isfinite(root) or root <= 0.0:
        raise ArithmeticError(f"fixed-point solve produced {root!r}")
    return root


def expiration_probability(
    params: RegimeParams, *, use_no_expiration_l0: bool = False
) -> tuple[float, float | None]:
    """Per-block expiration probability exp(-delta*mu*k/L0) and its bound.

    With ``use_no_expiration_l0`` the exponent uses the no-expiration pool
    constant instead (the comparison curve for future-cone orphanage); for
    mu*k <= 1 that constant diverges and the value saturates at 1.
    """
    if params.delta is None:
        raise ValueError("expiration_probability requires a finite expiration window")
    mk = params.mu * params.k
    if use_no_expiration_l0:
        if mk <= 1.0:
            prob = 1.0
        else:
            l0 = tip_pool_no_expiration(params) / params.lam
            prob = math.exp(-params.delta * mk / l0)
    else:
        prob = math.exp(-params.delta * mk / solve_l0(params))
    bound = math.exp(-params.delta * (mk - 1.0) / params.h) if mk > 1.0 else None
    return prob, bound


def selection_probability(L: float, k: int) -> float:
    """Chance 1 - (1 - 1/L)^k that a fixed tip is hit by k uniform draws."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1.0 - (1.0 - 1.0 / L) ** k


def predict(params: RegimeParams) -> AnalyticPrediction:
    """Full prediction bundle for one parameter point."""
    stability, drift = classify_stability(params)
    if params.delta is not None:
        l0 = solve_l0(params)
        prob, bound = expiration_probability(params)
        return AnalyticPrediction(stability, drift, l0, l0 * params.lam, prob, bound)
    if stability is Stability.STABLE:
        pool = tip_pool_no_expiration(params)
        return AnalyticPrediction(stability, drift, pool / params.lam, pool, None, None)
    return AnalyticPrediction(stability, drift, None, None, None, None)
