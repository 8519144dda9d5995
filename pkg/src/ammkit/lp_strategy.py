"""Optimal range selection for a liquidity provider with logarithmic utility.

A position around the pool rate ``Z`` is described by two dimensionless
half-spreads::

    sqrt(Z_U) = sqrt(Z) / (1 - delta_U / 2),     sqrt(Z_L) = sqrt(Z) (1 - delta_L / 2)

with total spread ``delta = delta_L + delta_U`` and skew ``rho = delta_U / delta``.
Per unit of wealth and time, the position earns ``4 pi / delta`` in fees, loses
``sigma**2 / (2 delta)`` to convexity and ``gamma_c / delta**2`` to
concentration risk, and carries ``rho`` units of exposure to the rate's return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .pool_mechanics import MAX_TICK, MIN_TICK, Tick, rate_of_tick, tick_of_rate


@dataclass(frozen=True)
class LpParams:
    gamma_c: float
    sigma: float
    zeta_rebal: float = 0.0
    epsilon: float = 1e-4
    mu: float = 0.0

    def __post_init__(self):
        if self.gamma_c < 0 or self.sigma < 0:
            raise DomainError("gamma_c and sigma must be nonnegative")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")

    @property
    def drift(self) -> float:
        """Drift net of proportional rebalancing costs."""
        return self.mu - self.zeta_rebal


@dataclass(frozen=True)
class SpreadQuote:
    """Quoted range; ``status`` is ``"ok"``, ``"max-range"`` or ``"refused"``."""

    delta_L: float
    delta_U: float
    Z_L: float
    Z_U: float
    viable: bool
    Z: float = 1.0
    status: str = "ok"

    @property
    def delta(self) -> float:
        return self.delta_L + self.delta_U

    @property
    def rho(self) -> float:
        return self.delta_U / self.delta if self.delta > 0 else 0.5


@dataclass(frozen=True)
class AsymmetryResult:
    rho: float
    admissible: bool


@dataclass(frozen=True)
class ViabilityReport:
    """Each check maps to ``(passed, margin)``; a negative margin fails."""

    checks: dict = field(default_factory=dict)
    threshold: float = 0.0  # sigma**2 / 8 rule of thumb

    @property
    def viable(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    @property
    def binding(self) -> str:
        return min(self.checks, key=lambda k: self.checks[k][1])


def range_bounds(Z: float, delta_L: float, delta_U: float) -> tuple[float, float]:
    """Rates ``(Z_L, Z_U)`` implied by the half-spreads."""
    s = math.sqrt(Z)
    lo = s * (1.0 - delta_L / 2.0)
    Z_L = max(lo, 0.0) ** 2
    Z_U = math.inf if delta_U >= 2.0 else (s / (1.0 - delta_U / 2.0)) ** 2
    return Z_L, Z_U


def spread_denominator(pi: float, params: LpParams) -> float:
    mu, s2 = params.drift, params.sigma**2
    return 4.0 * pi - s2 / 2.0 + mu * (mu - s2 / 2.0)


def position_asymmetry(delta: float, mu: float) -> AsymmetryResult:
    """``rho = 1/2 + mu / delta``; flagged when it leaves ``(0, 1)``."""
    if not delta > 0:
        raise DomainError("spread must be positive")
    rho = 0.5 + mu / delta
    return AsymmetryResult(rho, 0.0 < rho < 1.0)


def viability_check(pi: float, params: LpParams) -> ViabilityReport:
    mu, s2, g = params.drift, params.sigma**2, params.gamma_c
    den = spread_denominator(pi, params)
    checks = {
        "profitability": (den >= params.epsilon, den - params.epsilon),
        "minimum_level": (pi - g / 8.0 >= s2 / 8.0, pi - g / 8.0 - s2 / 8.0),
        "drift_adjusted": None,
        "drift_range": (abs(mu) <= 1.0, 1.0 - abs(mu)),
    }
    rhs = s2 / 8.0 * (mu * mu / 2.0 + 1.0) - mu / 4.0 * (mu - s2 / 2.0)
    checks["drift_adjusted"] = (pi - g / 8.0 >= rhs, pi - g / 8.0 - rhs)
    if den > 0:
        delta = (2.0 * g + mu * mu * s2) / den
        margin = min(delta - 2.0 * abs(mu), 4.0 - 2.0 * abs(mu) - delta)
    else:
        margin = -math.inf
    checks["spread_bounds"] = (margin >= 0.0, margin)
    return ViabilityReport(checks, s2 / 8.0)


def optimal_spread(pi: float, params: LpParams, Z: float = 1.0) -> SpreadQuote:
    """Closed-form optimal range at pool fee rate ``pi`` (per day) and rate ``Z``."""
    if not pi > 0:
        raise DomainError("pool fee rate must be positive")
    mu = params.drift
    if abs(mu) > 1.0:
        return SpreadQuote(0.0, 0.0, Z, Z, False, Z, "refused")
    report = viability_check(pi, params)
    den = spread_denominator(pi, params)
    if den <= 0:
        return SpreadQuote(2.0, 2.0, 0.0, math.inf, False, Z, "max-range")
    delta = (2.0 * params.gamma_c + mu * mu * params.sigma**2) / den
    delta_U = delta / 2.0 + mu
    delta_L = delta - delta_U
    if not report.viable or not (0.0 < delta_L <= 2.0 and 0.0 <= delta_U < 2.0):
        return SpreadQuote(2.0, 2.0, 0.0, math.inf, False, Z, "max-range")
    Z_L, Z_U = range_bounds(Z, delta_L, delta_U)
    return SpreadQuote(delta_L, delta_U, Z_L, Z_U, True, Z, "ok")


def log_growth_rate(delta, pi: float, params: LpParams):
    """Drift of ``log V`` per unit time when holding spread ``delta`` with optimal skew."""
    delta = np.asarray(delta, dtype=float)
    mu, s2 = params.drift, params.sigma**2
    rho = 0.5 + mu / delta
    mean = (4.0 * pi - s2 / 2.0) / delta + mu * rho - params.gamma_c / delta**2
    return mean - 0.5 * s2 * rho**2


def hamiltonian_argmax(pi: float, params: LpParams, grid=None) -> float:
    """Grid maximiser of the log-growth rate over spreads in ``(0, 4]``."""
    grid = np.geomspace(1e-9, 4.0, 10_000) if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid > 4.0):
        raise DomainError("spread grid must lie in (0, 4]")
    return float(grid[int(np.argmax(log_growth_rate(grid, pi, params)))])


@dataclass(frozen=True)
class LpWealthState:
    V: float
    alpha_pos: float
    fees: float = 0.0
    costs: float = 0.0
    ruined: bool = False

    @classmethod
    def start(cls, V0: float) -> "LpWealthState":
        return cls(V0, V0)


def lp_wealth_step(
    state: LpWealthState,
    quote: SpreadQuote,
    dZ_over_Z: float,
    pi: float,
    params: LpParams,
    dt: float,
) -> LpWealthState:
    """Advance wealth over ``dt`` given the realised relative rate change.

    The position gains ``rho`` times the rate return less the convexity drag;
    fees accrue at ``4 pi / delta`` less the concentration cost; rebalancing
    costs ``zeta_rebal * rho`` per unit time.
    """
    if state.ruined:
        return state
    if not quote.viable:
        raise DomainError("cannot hold a non-viable quote")
    if not dt > 0:
        raise DomainError("dt must be positive")
    V, delta, rho = state.V, quote.delta, quote.rho
    d_alpha = V * (rho * dZ_over_Z - params.sigma**2 / (2.0 * delta) * dt)
    d_fees = V * (4.0 * pi / delta - params.gamma_c / delta**2) * dt
    d_costs = -V * params.zeta_rebal * rho * dt
    V1 = V + d_alpha + d_fees + d_costs
    return LpWealthState(
        V1,
        state.alpha_pos + d_alpha,
        state.fees + d_fees,
        state.costs + d_costs,
        ruined=V1 <= 0,
    )


@dataclass(frozen=True)
class ConcentrationFit:
    gamma_c: float
    pi: float
    intercept: float
    slope: float
    stderr: tuple


def fit_concentration_cost(deltas, p_hat, m: float) -> ConcentrationFit:
    """Regress ``delta**2 p_hat`` on ``delta``: slope ``4 pi m``, intercept ``-gamma_c m``."""
    d = np.asarray(deltas, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    if d.shape != p.shape or d.ndim != 1:
        raise DomainError("deltas and fee samples must be matching vectors")
    if np.unique(d).size < 2:
        raise DomainError("need at least two distinct spreads")
    X = np.column_stack([np.ones_like(d), d])
    yv = d * d * p
    coef, *_ = np.linalg.lstsq(X, yv, rcond=None)
    n = len(d)
    if n > 2:
        resid = yv - X @ coef
        s2 = resid @ resid / (n - 2)
        cov = s2 * np.linalg.inv(X.T @ X)
        se = tuple(np.sqrt(np.diag(cov)) / np.array([m, 4.0 * m]))
    else:
        se = (math.nan, math.nan)
    return ConcentrationFit(-coef[0] / m, coef[1] / (4.0 * m), coef[0], coef[1], se)


@dataclass(frozen=True)
class TickRange:
    lower: Tick
    upper: Tick
    full_range: bool = False


def spread_to_ticks(quote: SpreadQuote, Z: float | None = None) -> TickRange:
    """Widen the quoted range outward to tick boundaries; the result contains ``Z``."""
    Z = quote.Z if Z is None else Z
    if quote.delta_L >= 2.0 and quote.delta_U >= 2.0:
        return TickRange(Tick(MIN_TICK), Tick(MAX_TICK), True)
    if not quote.viable:
        raise DomainError("quote is not viable")
    if quote.Z_L > 0:
        i = tick_of_rate(quote.Z_L)
        lo = i + 1 if rate_of_tick(i + 1) == quote.Z_L else i
    else:
        lo = MIN_TICK
    hi = tick_of_rate(quote.Z_U) + 1 if math.isfinite(quote.Z_U) else MAX_TICK
    while rate_of_tick(lo) >= Z:
        lo -= 1
    while rate_of_tick(hi) < Z:
        hi += 1
    if hi <= lo:
        hi = lo + 1
    return TickRange(Tick(lo), Tick(hi), False)


def with_drift(params: LpParams, mu: float) -> LpParams:
    return replace(params, mu=mu)
