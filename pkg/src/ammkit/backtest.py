"""Rolling-window backtests on event streams (replayed or synthetic).

Events follow a flat CSV schema with one header line::

    timestamp,pool_id,kind,delta_x,delta_y,rate,depth,tick_lower,tick_upper

Timestamps are Unix seconds.  Swap events of the traded pool carry the pool
rate ``Z`` and depth ``kappa``; swap events of the oracle stream carry ``S``.
Liquidity-taking backtests assume the taker's orders do not move the pool.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lp_strategy as lp
from .dynamics import CirParams, ModelIParams, simulate_cir, simulate_model1
from .econometrics import estimate_model1, pool_fee_rate
from .errors import ConfigError, DataError, DomainError
from .execution_strategies import (
    GridClampWarning,
    LiquidationConfig,
    benchmark_speed,
    closed_form_speed,
    default_Z_grid,
    solve_scalar_coefficients,
)
from .pool_mechanics import BUY, SELL, PoolState, distribute_fee, execute_swap, range_holdings
from .rng import streams

log = logging.getLogger(__name__)

DAY = 86_400.0
EVENT_FIELDS = ("timestamp", "pool_id", "kind", "delta_x", "delta_y", "rate", "depth", "tick_lower", "tick_upper")
KINDS = ("swap", "mint", "burn")


@dataclass(frozen=True)
class EventRecord:
    timestamp: float
    pool_id: str
    kind: str
    delta_x: float
    delta_y: float
    rate: float
    depth: float = math.nan
    tick_lower: int | None = None
    tick_upper: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown event kind {self.kind!r}")
        if not self.rate > 0:
            raise DataError(f"rate must be positive at t={self.timestamp}")


def read_events(path) -> list[EventRecord]:
    out = []
    last: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != EVENT_FIELDS:
            raise DataError(f"event header must be {','.join(EVENT_FIELDS)}")
        for line, row in enumerate(reader, start=2):
            try:
                ev = EventRecord(
                    float(row["timestamp"]), row["pool_id"], row["kind"],
                    float(row["delta_x"]), float(row["delta_y"]), float(row["rate"]),
                    float(row["depth"]) if row["depth"] else math.nan,
                    int(row["tick_lower"]) if row["tick_lower"] else None,
                    int(row["tick_upper"]) if row["tick_upper"] else None,
                )
            except (ValueError, KeyError) as exc:
                raise DataError(f"line {line}: {exc}") from exc
            if ev.timestamp < last.get(ev.pool_id, -math.inf):
                raise DataError(f"line {line}: timestamps decrease within pool {ev.pool_id}")
            last[ev.pool_id] = ev.timestamp
            out.append(ev)
    return out


def write_events(path, events) -> None:
    def fmt(v):
        if v is None:
            return ""
        return repr(float(v)) if isinstance(v, float) else str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_FIELDS)
        for e in events:
            w.writerow([fmt(getattr(e, f)) for f in EVENT_FIELDS])


@dataclass(frozen=True)
class SampledSeries:
    """Pool and oracle series forward-filled onto a uniform clock (seconds)."""

    t: np.ndarray
    Z: np.ndarray
    S: np.ndarray
    kappa: np.ndarray
    volume_y: np.ndarray  # |delta_y| traded in the pool during each interval
    volume_x: np.ndarray


def sample_events(events, pool_id: str, oracle_id: str | None, step: float) -> SampledSeries:
    pool = [e for e in events if e.pool_id == pool_id and e.kind == "swap"]
    if not pool:
        raise DataError(f"no swaps for pool {pool_id!r}")
    oracle = [e for e in events if e.pool_id == oracle_id and e.kind == "swap"] if oracle_id else []
    if oracle_id and not oracle:
        raise DataError(f"no oracle events for {oracle_id!r}")
    t0 = pool[0].timestamp if not oracle else max(pool[0].timestamp, oracle[0].timestamp)
    t1 = pool[-1].timestamp
    n = int(math.floor((t1 - t0) / step)) + 1
    grid = t0 + step * np.arange(n)
    pt = np.array([e.timestamp for e in pool])
    idx = np.searchsorted(pt, grid, side="right") - 1
    Z = np.array([e.rate for e in pool])[idx]
    kappa = np.array([e.depth for e in pool])[idx]
    if oracle:
        ot = np.array([e.timestamp for e in oracle])
        S = np.array([e.rate for e in oracle])[np.searchsorted(ot, grid, side="right") - 1]
    else:
        S = Z.copy()
    bins = np.clip(np.searchsorted(grid, pt, side="right") - 1, 0, n - 1)
    vy = np.bincount(bins, weights=np.abs([e.delta_y for e in pool]), minlength=n)
    vx = np.bincount(bins, weights=np.abs([e.delta_x for e in pool]), minlength=n)
    return SampledSeries(grid, Z, S, kappa, vy, vx)


@dataclass(frozen=True)
class BacktestConfig:
    """Windows and sampling in seconds; ``phi`` per day, ``alpha`` per unit of Y."""

    in_sample_window: float = 6 * 3600.0
    out_sample_window: float = 3600.0
    participation_rate: float = 0.5
    gas_per_tx: float = 0.0
    amm_fee: float = 1e-4
    strategy: str = "optimal"
    phi: float = 1e-3
    alpha: float = 5.0
    sample_step: float = 13.0
    pool_id: str = "pool"
    oracle_id: str = "oracle"
    n_t: int = 128
    n_Z: int = 33

    def __post_init__(self):
        if self.in_sample_window <= 0 or self.out_sample_window <= 0:
            raise ConfigError("windows must be positive")
        if not 0.0 <= self.participation_rate <= 1.0:
            raise ConfigError("participation rate must lie in [0, 1]")
        if self.strategy not in ("optimal", "twap", "single"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.sample_step <= 0 or self.gas_per_tx < 0 or not 0 <= self.amm_fee < 1:
            raise ConfigError("sample step must be positive, gas and fee nonnegative")


@dataclass(frozen=True)
class Trade:
    t: float  # seconds
    delta_y: float  # Y sold (negative: bought)
    delta_x: float  # X received (negative: paid)
    Z: float


@dataclass(frozen=True)
class RunResult:
    gross_pnl: float
    fees: float
    num_trades: int
    criterion: float
    y_terminal: float
    window_start: float
    execution_start: float
    execution_end: float
    strategy: str
    trades: tuple = ()
    metadata: dict = field(default_factory=dict)

    @property
    def net_pnl(self) -> float:
        return self.gross_pnl - self.fees


def gross_pnl_from_trades(trades, y0: float, Z0: float, Z_T: float) -> float:
    x = sum(tr.delta_x for tr in trades)
    y = y0 - sum(tr.delta_y for tr in trades)
    return x + y * Z_T - y0 * Z0


def _execute(
    series: SampledSeries, a: int, b: int, y0: float, strategy: str, config: BacktestConfig,
    liq: LiquidationConfig, coeffs,
) -> tuple[list[Trade], float, float, int]:
    """Trade over samples ``a..b-1``; returns trades, fees, running penalty and clamp count."""
    dt = config.sample_step / DAY
    y = y0
    trades: list[Trade] = []
    fees = penalty = 0.0
    clamps = 0
    for k in range(a, b):
        t = (k - a) * dt
        Z, S, kappa = series.Z[k], series.S[k], series.kappa[k]
        if strategy == "optimal":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", GridClampWarning)
                nu = closed_form_speed(t, y, Z, S, coeffs, liq)
            clamps += len(caught)
        elif strategy == "twap":
            nu = benchmark_speed("twap", t, y, liq)
        else:
            nu = benchmark_speed("single", t, y, liq, dt=dt)
        dy = nu * dt
        if strategy != "optimal":
            dy = min(dy, y)
        penalty += liq.phi * y * y * dt
        if dy == 0.0 or not np.isfinite(dy):
            continue
        pool = PoolState.from_depth(kappa, Z)
        res = execute_swap(pool, SELL if dy > 0 else BUY, abs(dy))
        dx = res.delta_x if dy > 0 else -res.delta_x
        trades.append(Trade(float(series.t[k]), float(dy), float(dx), float(Z)))
        fees += config.amm_fee * abs(dx) + config.gas_per_tx
        y -= dy
    return trades, fees, penalty, clamps


def _windows(series: SampledSeries, config: BacktestConfig):
    step = config.sample_step
    n_in = int(round(config.in_sample_window / step))
    n_out = int(round(config.out_sample_window / step))
    start = 0
    n = series.t.shape[0]
    while start + n_in + n_out <= n:
        yield start, start + n_in, start + n_in + n_out
        start += n_out


def _run(events, config: BacktestConfig, speculative: bool) -> list[RunResult]:
    series = sample_events(events, config.pool_id, config.oracle_id, config.sample_step)
    dt = config.sample_step / DAY
    results = []
    for s0, s1, s2 in _windows(series, config):
        T = (s2 - s1) * dt  # the horizon ends with the last sampled step, not the nominal window
        try:
            est = estimate_model1(series.S[s0:s1], series.Z[s0:s1], dt)
        except (DataError, DomainError) as exc:
            log.info("skipping window at %s: %s", series.t[s0], exc)
            continue
        Z0, kappa0 = float(series.Z[s1]), float(series.kappa[s1])
        if speculative:
            y0 = 0.0
        else:
            y0 = config.participation_rate * float(series.volume_y[s0:s1].sum()) * (s2 - s1) / (s1 - s0)
        liq = LiquidationConfig(T=T, phi=config.phi, alpha=config.alpha, eta=dt, kappa=kappa0, y0=y0)
        coeffs = None
        if config.strategy == "optimal":
            spread = max(est.gamma, est.sigma, 1e-3)
            grid = default_Z_grid(Z0, spread, T, config.n_Z)
            coeffs = solve_scalar_coefficients(liq, max(est.beta, 0.0), grid, n_t=config.n_t)
        trades, fees, penalty, clamps = _execute(series, s1, s2, y0, config.strategy, config, liq, coeffs)
        Z_T = float(series.Z[s2 - 1])
        gross = gross_pnl_from_trades(trades, y0, Z0, Z_T)
        y_T = y0 - sum(tr.delta_y for tr in trades)
        crit = gross - config.alpha * y_T * y_T - penalty
        results.append(RunResult(
            gross, fees, len(trades), crit, y_T,
            float(series.t[s0]), float(series.t[s1]), float(series.t[s2 - 1]), config.strategy,
            tuple(trades),
            {"sigma": est.sigma, "gamma": est.gamma, "beta": est.beta, "y0": y0, "clamps": clamps,
             "estimation_end": float(series.t[s1 - 1])},
        ))
    return results


def run_liquidation_backtest(events, config: BacktestConfig) -> list[RunResult]:
    """Estimate on each in-sample window, then liquidate over the next window."""
    return _run(events, config, speculative=False)


def run_speculation_backtest(events, config: BacktestConfig) -> list[RunResult]:
    """As the liquidation backtest but starting flat, so only the rate spread drives trading."""
    return _run(events, config, speculative=True)


def write_results_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", "execution_start", "execution_end", "strategy",
                    "gross_pnl_x_units", "fees_x_units", "num_trades", "criterion_x_units", "y_terminal"])
        for r in results:
            w.writerow([repr(r.window_start), repr(r.execution_start), repr(r.execution_end), r.strategy,
                        repr(r.gross_pnl), repr(r.fees), r.num_trades, repr(r.criterion), repr(r.y_terminal)])


def synthetic_model1_events(
    params: ModelIParams, kappa: float, step: float, n: int, seed: int | None,
    volume_per_step: float = 1.0, t0: float = 0.0, pool_id: str = "pool", oracle_id: str = "oracle",
) -> list[EventRecord]:
    """One pool swap and one oracle quote every ``step`` seconds from Model I paths."""
    S, Z = simulate_model1(params, step / DAY, n - 1, seed)
    (g,) = streams(None if seed is None else seed + 1, 1)
    vol = g.exponential(volume_per_step, size=n)
    out = []
    for k in range(n):
        t = t0 + k * step
        out.append(EventRecord(t, pool_id, "swap", float(vol[k] * Z[k]), float(vol[k]), float(Z[k]), kappa))
        out.append(EventRecord(t, oracle_id, "swap", 0.0, 0.0, float(S[k])))
    return out


# ---------------------------------------------------------------------------
# liquidity provision


@dataclass(frozen=True)
class LpBacktestConfig:
    """Minute-by-minute provision with the closed-form spread; costs in units of X."""

    V0: float = 1e6
    gamma_c: float = 5e-7
    fee_tier: float = 0.0005
    gas_per_op: float = 0.0
    mu: float = 0.0
    epsilon: float = 1e-4
    period: float = 60.0
    window: float = DAY
    pool_id: str = "pool"

    def __post_init__(self):
        if self.V0 <= 0 or self.period <= 0 or self.window <= self.period:
            raise ConfigError("wealth, period and estimation window must be positive (window > period)")


@dataclass(frozen=True)
class LpBacktestReport:
    """Per-operation relative performance (fractions of wealth)."""

    position: tuple  # (mean, sd)
    fees: tuple
    total: tuple
    hold: tuple
    operations: int
    viable_fraction: float
    gas_total: float
    exec_cost_total: float
    mean_spread: float

    def break_even_wealth(self, gas_per_op: float) -> float:
        """Wealth at which mean per-operation income equals a flat gas fee."""
        m = self.total[0]
        return gas_per_op / m if m > 0 else math.inf


def _mean_sd(v) -> tuple:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return (math.nan, math.nan)
    return (float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0)


def run_lp_backtest(events, config: LpBacktestConfig) -> LpBacktestReport:
    """Replay swaps minute by minute, quoting the optimal range from trailing estimates."""
    swaps = [e for e in events if e.pool_id == config.pool_id and e.kind == "swap"]
    if not swaps:
        raise DataError(f"no swaps for pool {config.pool_id!r}")
    if any(not math.isfinite(e.depth) or e.depth <= 0 for e in swaps):
        raise DataError("swap events need a positive depth")
    series = sample_events(swaps, config.pool_id, None, config.period)
    ts = np.array([e.timestamp for e in swaps])
    per_day = DAY / config.period
    lag = int(round(config.window / config.period))
    logret = np.diff(np.log(series.Z))
    pos_r, fee_r, tot_r, hold_r, spreads = [], [], [], [], []
    gas = exec_cost = 0.0
    viable = 0
    V = config.V0
    held_y = None  # Y held at the end of the previous operation
    for i in range(lag, series.t.shape[0] - 1):
        Z, Z1, kappa = series.Z[i], series.Z[i + 1], series.kappa[i]
        sigma = float(logret[i - lag : i].std(ddof=1) * math.sqrt(per_day))
        pi = float(pool_fee_rate(series.volume_x[i - lag : i].sum() * DAY / config.window, kappa, Z, config.fee_tier))
        hold_r.append(0.5 * (Z1 / Z - 1.0))
        params = lp.LpParams(config.gamma_c, sigma, 0.0, config.epsilon, config.mu)
        quote = lp.optimal_spread(pi, params, Z) if pi > 0 else None
        if quote is None or not quote.viable:
            held_y = None
            continue
        viable += 1
        depth = V / (2.0 * math.sqrt(Z) - math.sqrt(quote.Z_L) - Z / math.sqrt(quote.Z_U))
        x0, y0 = range_holdings(depth, Z, quote.Z_L, quote.Z_U)
        cost = 0.0
        if held_y is not None:
            dy = abs(y0 - held_y)
            cost = dy * dy * Z**1.5 / kappa
        exec_cost += cost
        gas += config.gas_per_op
        x1, y1 = range_holdings(depth, Z1, quote.Z_L, quote.Z_U)
        d_alpha = x1 + y1 * Z1 - V
        lo = np.searchsorted(ts, series.t[i], side="left")
        hi = np.searchsorted(ts, series.t[i + 1], side="left")
        earned = 0.0
        position = _RangeView(depth, quote.Z_L, quote.Z_U)
        for e in swaps[lo:hi]:
            total = config.fee_tier * abs(e.delta_x)
            earned += distribute_fee(total, [position], e.rate, other_depth=e.depth)[0]
        pos_r.append(d_alpha / V)
        fee_r.append(earned / V)
        tot_r.append((d_alpha + earned - cost) / V)
        spreads.append(quote.delta)
        V = V + d_alpha + earned - cost - config.gas_per_op
        held_y = y1
        if V <= 0:
            break
    ops = len(tot_r)
    return LpBacktestReport(
        _mean_sd(pos_r), _mean_sd(fee_r), _mean_sd(tot_r), _mean_sd(hold_r), ops,
        viable / max(1, series.t.shape[0] - 1 - lag), gas, float(exec_cost),
        float(np.mean(spreads)) if spreads else math.nan,
    )


@dataclass(frozen=True)
class _RangeView:
    """Duck-typed position for :func:`distribute_fee` with real-valued bounds."""

    position_depth: float
    lower_rate: float
    upper_rate: float

    def in_range(self, Z: float) -> bool:
        return self.lower_rate < Z <= self.upper_rate


def synthetic_lp_events(
    Z0: float, kappa: float, sigma: float, cir: CirParams, fee_tier: float, minutes: int,
    seed: int | None, pool_id: str = "pool", trades_per_minute: int = 4,
) -> list[EventRecord]:
    """GBM pool rate with a square-root fee rate; swap volume is sized to earn that fee rate.

    Each minute carries ``trades_per_minute`` swaps with alternating sides at
    the prevailing rate.
    """
    dt = 60.0 / DAY
    (gz,) = streams(seed, 1)
    eps = gz.standard_normal(minutes)
    Z = Z0 * np.exp(np.concatenate([[0.0], np.cumsum(-0.5 * sigma**2 * dt + sigma * math.sqrt(dt) * eps)]))
    pi = simulate_cir(cir, dt, minutes, None if seed is None else seed + 1)
    out = []
    for k in range(minutes):
        vol_x = pi[k] * 2.0 * kappa * math.sqrt(Z[k]) / fee_tier * dt  # daily volume times dt
        each = vol_x / trades_per_minute
        for j in range(trades_per_minute):
            t = k * 60.0 + j * 60.0 / trades_per_minute
            sgn = 1.0 if j % 2 == 0 else -1.0
            out.append(EventRecord(t, pool_id, "swap", sgn * each, -sgn * each / Z[k], float(Z[k]), kappa))
    return out
