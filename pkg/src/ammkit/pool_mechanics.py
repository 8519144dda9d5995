"""Constant-product and concentrated-liquidity pool arithmetic.

Conventions
-----------
* Asset X is the numeraire, Y the risky asset; rates are quoted in X per Y.
* ``"sell"`` means the liquidity taker sells Y into the pool (rate falls);
  ``"buy"`` means the taker buys Y out of the pool (rate rises).
* The fee is charged on the leg the taker pays.  It is kept outside the
  reserves and reported in X; a Y-denominated fee is converted at the rate
  prevailing before the trade.
* Tick ranges are left-open, right-closed: ``(Z(i), Z(i+1)]``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DepletionError, DomainError

BUY = "buy"
SELL = "sell"
TICK_BASE = 1.0001
MIN_TICK = -887272
MAX_TICK = 887272
_LOG_BASE = math.log(TICK_BASE)


def _check_side(side: str) -> None:
    if side not in (BUY, SELL):
        raise DomainError(f"side must be 'buy' or 'sell', got {side!r}")


# ---------------------------------------------------------------------------
# ticks


def rate_of_tick(i: int) -> float:
    """Rate at tick ``i``: ``1.0001 ** i``."""
    return TICK_BASE ** int(i)


def tick_of_rate(Z: float) -> int:
    """Index ``i`` of the tick range ``(Z(i), Z(i+1)]`` that contains ``Z``.

    A rate sitting exactly on a boundary ``Z(k)`` belongs to ``(Z(k-1), Z(k)]``.
    """
    if not Z > 0 or not math.isfinite(Z):
        raise DomainError(f"rate must be positive and finite, got {Z}")
    i = math.floor(math.log(Z) / _LOG_BASE)
    while rate_of_tick(i) >= Z:
        i -= 1
    while rate_of_tick(i + 1) < Z:
        i += 1
    return i


@dataclass(frozen=True, order=True)
class Tick:
    index: int

    @property
    def rate(self) -> float:
        return rate_of_tick(self.index)

    @classmethod
    def containing(cls, Z: float) -> "Tick":
        """Tick whose range ``(Z(i), Z(i+1)]`` holds ``Z``."""
        return cls(tick_of_rate(Z))


def _as_rate(bound: Tick | float) -> float:
    return bound.rate if isinstance(bound, Tick) else float(bound)


# ---------------------------------------------------------------------------
# constant-product pool


@dataclass(frozen=True)
class PoolState:
    """Reserves of a constant-product pool with fee tier ``tau``."""

    x: float
    y: float
    tau: float = 0.0

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0):
            raise DomainError(f"reserves must be positive, got x={self.x}, y={self.y}")
        if not 0.0 <= self.tau < 1.0:
            raise DomainError(f"fee tier must lie in [0, 1), got {self.tau}")

    @property
    def kappa(self) -> float:
        return math.sqrt(self.x * self.y)

    @classmethod
    def from_depth(cls, kappa: float, Z: float, tau: float = 0.0) -> "PoolState":
        """Pool with depth ``kappa`` quoting marginal rate ``Z``."""
        if not (kappa > 0 and Z > 0):
            raise DomainError("depth and rate must be positive")
        s = math.sqrt(Z)
        return cls(kappa * s, kappa / s, tau)


@dataclass(frozen=True)
class SwapResult:
    """Outcome of one liquidity-taking trade.

    ``delta_x`` is the X the taker paid (buy, fee included) or received (sell).
    ``delta_y`` is the Y actually exchanged; it is smaller than requested only
    when a concentrated pool ran out of liquidity (``filled`` is then False).
    """

    side: str
    delta_x: float
    delta_y: float
    fee_paid: float
    rate_before: float
    rate_after: float
    unitary_cost: float
    pool: PoolState | None = None
    filled: bool = True
    segments: tuple = ()
    fee_shares: dict = field(default_factory=dict)

    @property
    def execution_rate(self) -> float:
        return self.delta_x / self.delta_y if self.delta_y > 0 else self.rate_before


def marginal_rate(pool: PoolState) -> float:
    """Instantaneous rate ``x / y``."""
    return pool.x / pool.y


def execute_swap(pool: PoolState, side: str, delta_y: float) -> SwapResult:
    """Trade ``delta_y`` units of Y against a constant-product pool.

    The post-trade reserves satisfy ``x' y' = kappa**2`` where the fee portion
    of the paid leg never enters the reserves, so the depth is unchanged.
    """
    _check_side(side)
    if not delta_y >= 0:
        raise DomainError(f"trade size must be nonnegative, got {delta_y}")
    Z0 = pool.x / pool.y
    k2 = pool.x * pool.y
    tau = pool.tau
    if delta_y == 0:
        return SwapResult(side, 0.0, 0.0, 0.0, Z0, Z0, 0.0, pool)
    if side == SELL:
        y1 = pool.y + (1.0 - tau) * delta_y
        x1 = k2 / y1
        dx = pool.x - x1
        fee = tau * delta_y * Z0
    else:
        if delta_y >= pool.y:
            raise DepletionError(f"cannot buy {delta_y} Y from a pool holding {pool.y}")
        y1 = pool.y - delta_y
        x1 = k2 / y1
        dx = (x1 - pool.x) / (1.0 - tau)
        fee = tau * dx
    new = PoolState(x1, y1, tau)
    return SwapResult(
        side=side,
        delta_x=dx,
        delta_y=delta_y,
        fee_paid=fee,
        rate_before=Z0,
        rate_after=x1 / y1,
        unitary_cost=abs(Z0 - dx / delta_y),
        pool=new,
    )


def approx_execution_rate(Z: float, kappa: float, nu: float, eta: float) -> float:
    """Execution rate ``Z - (eta / kappa) Z**1.5 nu`` for trading speed ``nu``.

    Positive ``nu`` sells Y, so the taker receives less than ``Z`` per unit.
    """
    return Z - (eta / kappa) * Z**1.5 * nu


def approx_unitary_cost(Z: float, kappa: float, delta_y: float) -> float:
    """Convexity approximation ``Z**1.5 |delta_y| / kappa`` of the unitary cost (fees excluded)."""
    return Z**1.5 * abs(delta_y) / kappa


# ---------------------------------------------------------------------------
# liquidity positions


@dataclass(frozen=True)
class LiquidityPosition:
    lower_tick: Tick
    upper_tick: Tick
    position_depth: float

    def __post_init__(self):
        if self.lower_tick.index >= self.upper_tick.index:
            raise DomainError("lower tick must be strictly below upper tick")
        if not self.position_depth >= 0:
            raise DomainError("position depth must be nonnegative")

    @property
    def lower_rate(self) -> float:
        return self.lower_tick.rate

    @property
    def upper_rate(self) -> float:
        return self.upper_tick.rate

    def in_range(self, Z: float) -> bool:
        return self.lower_rate < Z <= self.upper_rate


def range_holdings(depth: float, Z: float, Z_L: float, Z_U: float) -> tuple[float, float]:
    """Holdings ``(x, y)`` of depth ``depth`` spread over ``(Z_L, Z_U]`` at rate ``Z``."""
    if Z < Z_L:
        return 0.0, depth * (1.0 / math.sqrt(Z_L) - 1.0 / math.sqrt(Z_U))
    if Z >= Z_U:
        return depth * (math.sqrt(Z_U) - math.sqrt(Z_L)), 0.0
    s = math.sqrt(Z)
    return depth * (s - math.sqrt(Z_L)), depth * (1.0 / s - 1.0 / math.sqrt(Z_U))


def cl_holdings(position: LiquidityPosition, Z: float) -> tuple[float, float]:
    """Quantities of X and Y locked in ``position`` when the pool quotes ``Z``."""
    if not Z > 0:
        raise DomainError(f"rate must be positive, got {Z}")
    return range_holdings(position.position_depth, Z, position.lower_rate, position.upper_rate)


def wealth_to_position_depth(
    V: float, w: float, Z: float, lower: Tick | float, upper: Tick | float
) -> float:
    """Depth bought by depositing ``w * V`` units of X-value over ``(lower, upper]``.

    Inverse of the mark-to-market map ``x + y Z`` of ``range_holdings``.
    """
    Z_L, Z_U = _as_rate(lower), _as_rate(upper)
    if not Z_L < Z < Z_U:
        raise DomainError(f"rate {Z} must lie strictly inside ({Z_L}, {Z_U})")
    if V < 0 or w < 0:
        raise DomainError("wealth and weight must be nonnegative")
    if w == 0 or V == 0:
        return 0.0
    return w * V / (2.0 * math.sqrt(Z) - math.sqrt(Z_L) - Z / math.sqrt(Z_U))


def distribute_fee(
    total_fee: float,
    positions: Sequence[LiquidityPosition],
    Z: float,
    other_depth: float = 0.0,
) -> list[float]:
    """Split ``total_fee`` pro rata to depth among positions whose range holds ``Z``.

    ``other_depth`` is active depth supplied by providers not in ``positions``;
    it dilutes the listed shares.
    """
    if total_fee < 0:
        raise DomainError("fee must be nonnegative")
    active = [p.position_depth if p.in_range(Z) else 0.0 for p in positions]
    depth = sum(active) + other_depth
    if depth <= 0:
        if total_fee > 0:
            raise DomainError("no active depth at the current rate to earn the fee")
        return [0.0] * len(positions)
    return [total_fee * d / depth for d in active]


# ---------------------------------------------------------------------------
# concentrated-liquidity pool


@dataclass(frozen=True)
class Segment:
    """One constant-depth piece of a tick-crossing swap.

    ``dx`` is the X that left (sell) or entered (buy) the reserves, ``dy`` the
    Y that entered (sell, net of fee) or left (buy) the reserves.
    """

    depth: float
    sqrt_before: float
    sqrt_after: float
    dx: float
    dy: float
    fee: float
    lower: int
    upper: int


class CLPool:
    """Pool with liquidity concentrated in tick ranges.

    Depth changes only at initialised ticks.  Swaps are decomposed into
    constant-depth segments; each segment obeys the constant-product rule on
    its virtual reserves ``(L sqrt(Z), L / sqrt(Z))``.  Range membership is
    decided on square roots of rates so that a swap landing on a boundary is
    classified consistently.
    """

    def __init__(self, Z: float, tau: float = 0.0):
        if not Z > 0:
            raise DomainError("rate must be positive")
        if not 0.0 <= tau < 1.0:
            raise DomainError("fee tier must lie in [0, 1)")
        self.tau = float(tau)
        self._sqrt = math.sqrt(Z)
        self._net: dict[int, float] = {}
        self._ticks: list[int] = []
        self._roots: list[float] = []
        self.positions: dict[object, LiquidityPosition] = {}
        self.liquidity = 0.0

    @property
    def rate(self) -> float:
        return self._sqrt * self._sqrt

    def virtual_state(self) -> PoolState:
        L = self.liquidity
        if L <= 0:
            raise DomainError("no active liquidity")
        return PoolState(L * self._sqrt, L / self._sqrt, self.tau)

    def _covers(self, p: LiquidityPosition) -> bool:
        return _root(p.lower_tick.index) < self._sqrt <= _root(p.upper_tick.index)

    def _touch(self, tick: int, delta: float) -> None:
        if tick not in self._net:
            j = bisect.bisect_left(self._ticks, tick)
            self._ticks.insert(j, tick)
            self._roots.insert(j, _root(tick))
            self._net[tick] = 0.0
        self._net[tick] += delta
        if self._net[tick] == 0.0:
            j = bisect.bisect_left(self._ticks, tick)
            del self._net[tick], self._ticks[j], self._roots[j]

    def add_position(self, key, position: LiquidityPosition) -> None:
        if key in self.positions:
            raise DomainError(f"position {key!r} already exists")
        self.positions[key] = position
        L = position.position_depth
        if L:
            self._touch(position.lower_tick.index, L)
            self._touch(position.upper_tick.index, -L)
            if self._covers(position):
                self.liquidity += L

    def remove_position(self, key) -> LiquidityPosition:
        position = self.positions.pop(key)
        L = position.position_depth
        if L:
            self._touch(position.lower_tick.index, -L)
            self._touch(position.upper_tick.index, L)
            if self._covers(position):
                self._resync()
        return position

    def _resync(self, above: bool = False) -> None:
        """Recompute active depth from scratch (removes float drift).

        With ``above`` the range just above the current boundary is used,
        which is the state of an upward swap that has crossed it.
        """
        s = self._sqrt
        total = 0.0
        for p in self.positions.values():
            lo, hi = _root(p.lower_tick.index), _root(p.upper_tick.index)
            if (lo <= s < hi) if above else (lo < s <= hi):
                total += p.position_depth
        self.liquidity = total

    def _cross(self, delta: float, above: bool) -> None:
        before = self.liquidity
        self.liquidity = before + delta
        if self.liquidity <= 1e-9 * max(before, abs(delta)):
            self._resync(above)

    # -- swaps -------------------------------------------------------------
    def swap(self, side: str, delta_y: float) -> SwapResult:
        """Exchange ``delta_y`` of Y; stops early only if depth runs out."""
        _check_side(side)
        if not delta_y >= 0:
            raise DomainError("trade size must be nonnegative")
        if side == SELL:
            return self._sell(delta_y)
        return self._buy(delta_y, by_x=False)

    def buy_with_x(self, x_gross: float) -> SwapResult:
        """Spend ``x_gross`` of X (fee included) on Y."""
        if not x_gross >= 0:
            raise DomainError("trade size must be nonnegative")
        return self._buy((1.0 - self.tau) * x_gross, by_x=True)

    def _sell(self, delta_y: float) -> SwapResult:
        Z0 = self.rate
        tau = self.tau
        remaining = (1.0 - tau) * delta_y
        segments = []
        ticks, roots = self._ticks, self._roots
        while remaining > 0:
            s = self._sqrt
            j = bisect.bisect_left(roots, s) - 1  # boundary strictly below
            sb = roots[j] if j >= 0 else 0.0
            L = self.liquidity
            if L > 0:
                need = L / sb - L / s if j >= 0 else math.inf
                if remaining < need:
                    s1, dy = L / (L / s + remaining), remaining
                else:
                    s1, dy = sb, need
                lower = ticks[j] if j >= 0 else MIN_TICK
                upper = ticks[j + 1] if j + 1 < len(ticks) else MAX_TICK
                fee = tau / (1.0 - tau) * dy * Z0
                segments.append(Segment(L, s, s1, L * (s - s1), dy, fee, lower, upper))
                remaining -= dy
                self._sqrt = s1
                if s1 != sb:
                    break
            elif j < 0:
                break
            else:
                self._sqrt = sb
            # now sitting on a boundary: it belongs to the range below
            self._cross(-self._net[ticks[j]], above=False)
        filled = remaining <= 1e-12 * max(1.0, delta_y)
        return self._finish(SELL, segments, Z0, filled)

    def _buy(self, amount: float, by_x: bool) -> SwapResult:
        Z0 = self.rate
        tau = self.tau
        remaining = amount
        segments = []
        ticks, roots = self._ticks, self._roots
        j = bisect.bisect_left(roots, self._sqrt)
        if j < len(ticks) and roots[j] == self._sqrt and remaining > 0:
            self._cross(self._net[ticks[j]], above=True)
            j += 1
        while remaining > 0:
            s = self._sqrt
            has_next = j < len(ticks)
            sb = roots[j] if has_next else math.inf
            L = self.liquidity
            if L > 0:
                if by_x:
                    need = L * (sb - s)
                    if remaining < need:
                        s1, dx = s + remaining / L, remaining
                    else:
                        s1, dx = sb, need
                    dy = L / s - L / s1
                    remaining -= dx
                else:
                    need = L / s - L / sb
                    if not has_next and remaining >= need:
                        break  # an unbounded range cannot deliver all of its Y
                    if remaining < need:
                        s1, dy = L / (L / s - remaining), remaining
                    else:
                        s1, dy = sb, need
                    dx = L * (s1 - s)
                    remaining -= dy
                lower = ticks[j - 1] if j > 0 else MIN_TICK
                upper = ticks[j] if has_next else MAX_TICK
                segments.append(Segment(L, s, s1, dx, dy, tau / (1.0 - tau) * dx, lower, upper))
                self._sqrt = s1
                if s1 != sb or remaining <= 0:
                    break
            elif not has_next:
                break
            else:
                self._sqrt = sb
            self._cross(self._net[ticks[j]], above=True)
            j += 1
        if j > 0 and self._sqrt == roots[j - 1]:
            # stopped on a crossed boundary: restore the range below it
            self._cross(-self._net[ticks[j - 1]], above=False)
        return self._finish(BUY, segments, Z0, remaining <= 1e-12 * max(1.0, amount))

    def _finish(self, side: str, segments: list, Z0: float, filled: bool = True) -> SwapResult:
        dx = sum(g.dx for g in segments)
        dy = sum(g.dy for g in segments)
        fee = sum(g.fee for g in segments)
        if side == BUY:
            dx_taker, dy_taker = dx + fee, dy
        else:
            dx_taker, dy_taker = dx, dy / (1.0 - self.tau)
        cost = abs(Z0 - dx_taker / dy_taker) if dy_taker > 0 else 0.0
        return SwapResult(
            side=side,
            delta_x=dx_taker,
            delta_y=dy_taker,
            fee_paid=fee,
            rate_before=Z0,
            rate_after=self.rate,
            unitary_cost=cost,
            filled=filled,
            segments=tuple(segments),
            fee_shares=self._split_fees(segments),
        )

    def _split_fees(self, segments) -> dict:
        shares: dict = {}
        for g in segments:
            if g.fee == 0.0:
                continue
            for key, p in self.positions.items():
                if p.position_depth and p.lower_tick.index <= g.lower and p.upper_tick.index >= g.upper:
                    shares[key] = shares.get(key, 0.0) + g.fee * p.position_depth / g.depth
        return shares


def _root(tick: int) -> float:
    return math.sqrt(rate_of_tick(tick))
