"""Discrete-time multi-pool liquidity-provision environment.

Every ``dt`` minutes the agent splits its wealth across ``N`` pools and, in
each pool, picks a range ``(Z(i - l), Z(i + u + 1)]`` around the active tick
``i``.  Between repositionings, Poisson order flow trades against the agent's
range plus a constant full-range depth supplied by everyone else.  Fees are
collected in X and the agent's holdings follow the concentrated-liquidity
formulas exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import OrderFlow, OrderFlowParams, simulate_order_flow
from .errors import ConfigError, DomainError
from .pool_mechanics import (
    MAX_TICK,
    MIN_TICK,
    SELL,
    CLPool,
    LiquidityPosition,
    Tick,
    cl_holdings,
    rate_of_tick,
    tick_of_rate,
    wealth_to_position_depth,
)

AGENT = "agent"
REST = "rest"


@dataclass(frozen=True)
class PoolConfig:
    flow: OrderFlowParams
    kappa_rest: float
    tau: float
    Z0: float

    def __post_init__(self):
        if self.kappa_rest < 0:
            raise ConfigError("rest-of-pool depth must be nonnegative")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError("fee tier must lie in [0, 1)")
        if not self.Z0 > 0:
            raise ConfigError("initial rate must be positive")


@dataclass(frozen=True)
class EnvConfig:
    """Times in minutes, wealth and gas in units of X."""

    pools: tuple
    dt: float = 30.0
    T: float = 1440.0
    V0: float = 500_000.0
    max_spread: int = 500
    gas_per_adjust: float = 0.0

    def __post_init__(self):
        if len(self.pools) == 0:
            raise ConfigError("need at least one pool")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("dt must divide T")
        if self.max_spread < 1:
            raise ConfigError("max_spread must be at least 1")
        if not self.V0 > 0:
            raise ConfigError("initial wealth must be positive")
        if self.gas_per_adjust < 0:
            raise ConfigError("gas must be nonnegative")

    @property
    def N(self) -> int:
        return len(self.pools)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


def single_pool_config(
    lam: float = 1 / 3,
    p: float = 0.5,
    tau: float = 0.003,
    kappa_rest: float = 15_000_000.0,
    Z0: float = 2200.0,
    mu_size: float = 132_030.0,
    xi_size: float = 20_000.0,
    **kwargs,
) -> EnvConfig:
    """One pool with the order-flow calibration used for the volatility table."""
    flow = OrderFlowParams(lam=lam, p=p, mu_size=mu_size, xi_size=xi_size)
    return EnvConfig(pools=(PoolConfig(flow, kappa_rest, tau, Z0),), **kwargs)


@dataclass(frozen=True)
class Action:
    w: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("weights must be nonnegative and sum to one")
        if not (len(self.w) == len(self.lower) == len(self.upper)):
            raise DomainError("weights and spreads must have one entry per pool")
        for v in (*self.lower, *self.upper):
            if int(v) != v or v < 0:
                raise DomainError("spreads must be nonnegative integers")

    def validate(self, config: EnvConfig) -> None:
        if len(self.w) != config.N:
            raise DomainError(f"action has {len(self.w)} pools, environment has {config.N}")
        if max(*self.lower, *self.upper) > config.max_spread:
            raise DomainError(f"spreads must not exceed {config.max_spread}")

    @classmethod
    def uniform(cls, config: EnvConfig, lower: int, upper: int) -> "Action":
        n = config.N
        return cls((1.0 / n,) * n, (lower,) * n, (upper,) * n)


@dataclass(frozen=True)
class PoolView:
    Z: float
    tick: int
    x_held: float
    y_held: float
    fees: float  # fees earned by the agent over the last step
    position: LiquidityPosition | None
    lower: int
    upper: int
    w: float


@dataclass(frozen=True)
class EnvState:
    pools: tuple
    V: float
    t: float
    cash: float = 0.0
    terminated: bool = False

    def marked_value(self) -> float:
        return self.cash + sum(p.x_held + p.y_held * p.Z for p in self.pools)


@dataclass(frozen=True)
class StepInfo:
    gas: float
    fees: tuple  # agent fees per pool
    fees_rest: tuple  # fees of the rest of each pool
    fees_charged: tuple  # fees paid by order flow per pool
    adjusted: tuple
    trades: tuple
    unfilled: int = 0


def active_tick(Z: float) -> int:
    """Index ``i`` with ``Z(i) < Z <= Z(i + 1)``."""
    return tick_of_rate(Z)


class LpEnv:
    """Stateful environment; use :meth:`reset` then :meth:`step` until done."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.state: EnvState | None = None

    def reset(self, seed: int | None) -> EnvState:
        cfg = self.config
        seeds = np.random.SeedSequence(seed).generate_state(cfg.N)
        self._flows: list[OrderFlow] = [
            simulate_order_flow(pc.flow, cfg.T, int(s)) for pc, s in zip(cfg.pools, seeds)
        ]
        self._cursor = [0] * cfg.N
        self._pools = []
        views = []
        for pc in cfg.pools:
            pool = CLPool(pc.Z0, pc.tau)
            if pc.kappa_rest > 0:
                pool.add_position(REST, LiquidityPosition(Tick(MIN_TICK), Tick(MAX_TICK), pc.kappa_rest))
            self._pools.append(pool)
            views.append(PoolView(pc.Z0, active_tick(pc.Z0), 0.0, 0.0, 0.0, None, 0, 0, 0.0))
        self.state = EnvState(tuple(views), cfg.V0, 0.0, cash=cfg.V0)
        return self.state

    @property
    def done(self) -> bool:
        s = self.state
        return s.terminated or s.t >= self.config.T - 1e-9

    def _target_ranges(self, action: Action, state: EnvState) -> list:
        out = []
        for view, l, u in zip(state.pools, action.lower, action.upper):
            i = active_tick(view.Z)
            lo, hi = i - int(l), i + int(u) + 1
            if not rate_of_tick(hi) > view.Z:
                hi += 1
            out.append((lo, hi))
        return out

    def step(self, action: Action) -> tuple[EnvState, StepInfo]:
        cfg, state = self.config, self.state
        if state is None:
            raise DomainError("call reset before step")
        if self.done:
            raise DomainError("episode is over")
        action.validate(cfg)
        ranges = self._target_ranges(action, state)
        unchanged = all(
            (v.position is None and w == 0)
            or (
                v.position is not None
                and (v.position.lower_tick.index, v.position.upper_tick.index) == r
                and v.w == w
            )
            for v, r, w in zip(state.pools, ranges, action.w)
        ) and any(v.position is not None for v in state.pools)

        # (1) withdraw, mark to market and pay gas
        gas = 0.0
        adjusted = [False] * cfg.N
        cash = state.cash
        views = list(state.pools)
        if not unchanged:
            for n, (view, pool) in enumerate(zip(views, self._pools)):
                had = view.position is not None and view.position.position_depth > 0
                if had:
                    pool.remove_position(AGENT)
                    cash += view.x_held + view.y_held * view.Z
                adjusted[n] = had or action.w[n] > 0
            gas = cfg.gas_per_adjust * sum(adjusted)
            cash -= gas
            if cash <= 0:
                terminated = EnvState(tuple(views), cash, state.t, cash, True)
                self.state = terminated
                return terminated, StepInfo(gas, (0.0,) * cfg.N, (0.0,) * cfg.N, (0.0,) * cfg.N, tuple(adjusted), (0,) * cfg.N)
            # (2) deposit
            V = cash
            for n, (pool, (lo, hi)) in enumerate(zip(self._pools, ranges)):
                Z = pool.rate
                depth = wealth_to_position_depth(V, action.w[n], Z, Tick(lo), Tick(hi))
                position = None
                x = y = 0.0
                if depth > 0:
                    position = LiquidityPosition(Tick(lo), Tick(hi), depth)
                    pool.add_position(AGENT, position)
                    x, y = cl_holdings(position, Z)
                    cash -= x + y * Z
                views[n] = PoolView(Z, active_tick(Z), x, y, 0.0, position,
                                    int(action.lower[n]), int(action.upper[n]), float(action.w[n]))

        # (3) order flow over [t, t + dt)
        t1 = state.t + cfg.dt
        fees, fees_rest, charged, trades = [], [], [], []
        unfilled = 0
        for n, (pool, flow) in enumerate(zip(self._pools, self._flows)):
            k = self._cursor[n]
            earned = rest = paid = 0.0
            count = 0
            while k < len(flow) and flow.times[k] < t1:
                size = float(flow.sizes[k])
                if size > 0:
                    if flow.is_buy[k]:
                        res = pool.buy_with_x(size)
                    else:
                        res = pool.swap(SELL, size / pool.rate)
                    earned += res.fee_shares.get(AGENT, 0.0)
                    rest += res.fee_shares.get(REST, 0.0)
                    paid += res.fee_paid
                    unfilled += not res.filled
                    count += 1
                k += 1
            self._cursor[n] = k
            fees.append(earned)
            fees_rest.append(rest)
            charged.append(paid)
            trades.append(count)

        # (4) holdings at the new rates, (5) fee accrual
        for n, pool in enumerate(self._pools):
            view = views[n]
            Z = pool.rate
            x, y = cl_holdings(view.position, Z) if view.position is not None else (0.0, 0.0)
            views[n] = PoolView(Z, active_tick(Z), x, y, fees[n], view.position, view.lower, view.upper, view.w)
        cash += sum(fees)
        V = cash + sum(v.x_held + v.y_held * v.Z for v in views)
        self.state = EnvState(tuple(views), V, t1, cash, V <= 0)
        info = StepInfo(gas, tuple(fees), tuple(fees_rest), tuple(charged), tuple(adjusted), tuple(trades), unfilled)
        return self.state, info


def reset(config: EnvConfig, seed: int | None) -> tuple[LpEnv, EnvState]:
    env = LpEnv(config)
    return env, env.reset(seed)


Strategy = Callable[[EnvState, EnvConfig], Action]


@dataclass(frozen=True)
class Episode:
    times: np.ndarray
    V: np.ndarray
    Z: np.ndarray  # (steps + 1, N)
    fees: np.ndarray  # (steps, N)
    gas: np.ndarray
    actions: tuple
    terminated: bool = False

    @property
    def V_T(self) -> float:
        return float(self.V[-1])

    def to_csv(self, path) -> None:
        import csv

        N = self.Z.shape[1]
        header = ["t"]
        for n in range(N):
            header += [f"Z{n}", f"l{n}", f"u{n}", f"w{n}", f"fees{n}"]
        header.append("V")
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(header)
            for k, t in enumerate(self.times):
                row = [repr(float(t))]
                for n in range(N):
                    a = self.actions[k] if k < len(self.actions) else None
                    row += [
                        repr(float(self.Z[k, n])),
                        a.lower[n] if a else "",
                        a.upper[n] if a else "",
                        repr(float(a.w[n])) if a else "",
                        repr(float(self.fees[k - 1, n])) if k > 0 else "0.0",
                    ]
                row.append(repr(float(self.V[k])))
                out.writerow(row)


def run_episode(config: EnvConfig, strategy: Strategy, seed: int | None) -> Episode:
    env = LpEnv(config)
    state = env.reset(seed)
    times, V, Z, fees, gas, actions = [0.0], [state.V], [[p.Z for p in state.pools]], [], [], []
    while not env.done:
        action = strategy(state, config)
        state, info = env.step(action)
        actions.append(action)
        times.append(state.t)
        V.append(state.V)
        Z.append([p.Z for p in state.pools])
        fees.append(info.fees)
        gas.append(info.gas)
    return Episode(
        np.array(times), np.array(V), np.array(Z),
        np.array(fees).reshape(-1, config.N), np.array(gas), tuple(actions), state.terminated,
    )


def fixed_strategy(lower: int, upper: int) -> Strategy:
    """Same spreads every step, wealth split evenly across pools."""

    def strategy(state: EnvState, config: EnvConfig) -> Action:
        return Action.uniform(config, lower, upper)

    return strategy


def return_volatility(episodes: Sequence[Episode], pool: int = 0, scale: float = math.sqrt(1440.0)) -> float:
    """Pooled s.d. of per-step log returns of the rate, multiplied by ``scale``."""
    r = np.concatenate([np.diff(np.log(e.Z[:, pool])) for e in episodes])
    return float(r.std(ddof=1) * scale)


def criterion(terminal_wealths, kind: str = "mean-variance", gamma_mv: float = 0.0, V0: float | None = None) -> float:
    """Sharpe ratio ``(E[V_T] - V0) / sd`` or mean-variance ``E[V_T] - gamma Var``."""
    v = np.asarray(terminal_wealths, dtype=float)
    if v.shape[0] < 2:
        raise DomainError("need at least two terminal wealths")
    mean, var = float(v.mean()), float(v.var(ddof=1))
    if kind == "mean-variance":
        return mean - gamma_mv * var
    if kind == "sharpe":
        if V0 is None:
            raise DomainError("sharpe criterion needs V0")
        if var == 0:
            raise DomainError("sharpe ratio undefined for zero variance")
        return (mean - V0) / math.sqrt(var)
    raise DomainError(f"unknown criterion {kind!r}")
