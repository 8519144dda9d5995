import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ammkit import pool_mechanics as pm
from ammkit.errors import DepletionError, DomainError

rates = st.floats(1e-2, 1e5)
depths = st.floats(1e2, 1e9)
fractions = st.floats(1e-6, 0.5)


@given(depths, rates, fractions, st.sampled_from([0.0, 0.0005, 0.003, 0.01]), st.sampled_from([pm.BUY, pm.SELL]))
def test_swap_keeps_depth(kappa, Z, frac, tau, side):
    pool = pm.PoolState.from_depth(kappa, Z, tau)
    res = pm.execute_swap(pool, side, frac * pool.y)
    assert math.isclose(res.pool.kappa, kappa, rel_tol=1e-12)
    assert res.fee_paid >= 0
    if side == pm.SELL:
        assert res.rate_after < res.rate_before and res.delta_x < frac * pool.y * Z
    else:
        assert res.rate_after > res.rate_before and res.delta_x > frac * pool.y * Z


@given(depths, rates, fractions)
def test_fee_free_round_trip_restores_rate(kappa, Z, frac):
    pool = pm.PoolState.from_depth(kappa, Z)
    dy = frac * pool.y
    sold = pm.execute_swap(pool, pm.SELL, dy)
    back = pm.execute_swap(sold.pool, pm.BUY, dy)
    assert math.isclose(marginal := pm.marginal_rate(back.pool), Z, rel_tol=1e-9), marginal
    assert math.isclose(back.delta_x, sold.delta_x, rel_tol=1e-9)


def test_fee_is_charged_on_the_paid_leg():
    pool = pm.PoolState.from_depth(1e6, 4.0, tau=0.01)
    sell = pm.execute_swap(pool, pm.SELL, 100.0)
    assert sell.fee_paid == pytest.approx(0.01 * 100.0 * 4.0)
    buy = pm.execute_swap(pool, pm.BUY, 100.0)
    assert buy.fee_paid == pytest.approx(0.01 * buy.delta_x)


def test_buying_the_whole_reserve_is_refused():
    pool = pm.PoolState.from_depth(100.0, 1.0)
    with pytest.raises(DepletionError):
        pm.execute_swap(pool, pm.BUY, pool.y)
    with pytest.raises(DomainError):
        pm.execute_swap(pool, "hold", 1.0)
    with pytest.raises(DomainError):
        pm.execute_swap(pool, pm.SELL, -1.0)


def test_zero_trade_is_a_no_op():
    pool = pm.PoolState.from_depth(100.0, 2.0)
    res = pm.execute_swap(pool, pm.SELL, 0.0)
    assert res.delta_x == 0.0 and res.pool == pool


def test_approximate_execution_rate_sign():
    assert pm.approx_execution_rate(2000.0, 1e7, 10.0, 1.0) < 2000.0
    assert pm.approx_execution_rate(2000.0, 1e7, -10.0, 1.0) > 2000.0
    assert pm.approx_unitary_cost(2000.0, 1e7, -5.0) == pm.approx_unitary_cost(2000.0, 1e7, 5.0)


@given(st.integers(-200_000, 200_000))
def test_tick_boundaries_belong_to_the_range_below(i):
    assert pm.tick_of_rate(pm.rate_of_tick(i)) == i - 1
    mid = math.sqrt(pm.rate_of_tick(i) * pm.rate_of_tick(i + 1))
    assert pm.Tick.containing(mid) == pm.Tick(i)


@given(st.floats(1e3, 1e7), st.floats(0.01, 1.0), rates, st.integers(1, 5000), st.integers(1, 5000))
def test_deposit_is_marked_back_to_its_value(V, w, Z, lo, hi):
    i = pm.tick_of_rate(Z)
    lower, upper = pm.Tick(i - lo), pm.Tick(i + hi)
    depth = pm.wealth_to_position_depth(V, w, Z, lower, upper)
    x, y = pm.range_holdings(depth, Z, lower.rate, upper.rate)
    assert math.isclose(x + y * Z, w * V, rel_tol=1e-9)


def test_holdings_outside_the_range_are_single_sided():
    p = pm.LiquidityPosition(pm.Tick(100), pm.Tick(200), 1e4)
    x, y = pm.cl_holdings(p, pm.rate_of_tick(50))
    assert x == 0.0 and y > 0
    x, y = pm.cl_holdings(p, pm.rate_of_tick(300))
    assert y == 0.0 and x > 0


def test_distribute_fee_is_pro_rata_among_active_positions():
    Z = 1.0
    inside = pm.LiquidityPosition(pm.Tick(-10), pm.Tick(10), 3.0)
    also = pm.LiquidityPosition(pm.Tick(-5), pm.Tick(5), 1.0)
    outside = pm.LiquidityPosition(pm.Tick(20), pm.Tick(30), 100.0)
    shares = pm.distribute_fee(8.0, [inside, also, outside], Z)
    assert shares == [6.0, 2.0, 0.0]
    assert sum(pm.distribute_fee(8.0, [inside], Z, other_depth=1.0)) == pytest.approx(6.0)
    with pytest.raises(DomainError):
        pm.distribute_fee(1.0, [outside], Z)


def test_position_ticks_must_be_ordered():
    with pytest.raises(DomainError):
        pm.LiquidityPosition(pm.Tick(5), pm.Tick(5), 1.0)


@settings(max_examples=50)
@given(depths, st.floats(0.5, 5000.0), fractions, st.sampled_from([pm.BUY, pm.SELL]), st.sampled_from([0.0, 0.003]))
def test_full_range_position_matches_constant_product(kappa, Z, frac, side, tau):
    cl = pm.CLPool(Z, tau)
    cl.add_position("lp", pm.LiquidityPosition(pm.Tick(pm.MIN_TICK), pm.Tick(pm.MAX_TICK), kappa))
    ref = pm.execute_swap(pm.PoolState.from_depth(kappa, Z, tau), side, frac * kappa / math.sqrt(Z))
    res = cl.swap(side, ref.delta_y)
    assert math.isclose(res.delta_x, ref.delta_x, rel_tol=1e-9)
    assert math.isclose(res.fee_paid, ref.fee_paid, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(cl.rate, ref.rate_after, rel_tol=1e-9)


def _ladder(Z=100.0, tau=0.003):
    pool = pm.CLPool(Z, tau)
    i = pm.tick_of_rate(Z)
    pool.add_position("wide", pm.LiquidityPosition(pm.Tick(i - 2000), pm.Tick(i + 2000), 1e4))
    pool.add_position("tight", pm.LiquidityPosition(pm.Tick(i - 2), pm.Tick(i + 3), 1e5))
    return pool, i


def test_crossing_ticks_changes_active_depth():
    pool, i = _ladder()
    assert pool.liquidity == pytest.approx(1.1e5)
    res = pool.swap(pm.BUY, 20.0)
    assert len(res.segments) >= 2 and res.filled
    assert pool.rate > pm.rate_of_tick(i + 3)
    assert pool.liquidity == pytest.approx(1e4)
    assert sum(res.fee_shares.values()) == pytest.approx(res.fee_paid, rel=1e-12)
    assert res.fee_shares["tight"] < res.fee_shares["wide"] * 10


def test_swap_stops_when_liquidity_runs_out():
    pool, i = _ladder(tau=0.0)
    res = pool.swap(pm.SELL, 1e9)
    assert not res.filled
    assert pool.rate == pytest.approx(pm.rate_of_tick(i - 2000))


def test_fee_free_cl_round_trip_restores_rate():
    pool, _ = _ladder(tau=0.0)
    start = pool.rate
    out = pool.swap(pm.SELL, 50.0)
    pool.swap(pm.BUY, out.delta_y)
    assert pool.rate == pytest.approx(start, rel=1e-12)


def test_buy_with_x_spends_the_budget():
    pool, _ = _ladder()
    res = pool.buy_with_x(500.0)
    assert res.delta_x == pytest.approx(500.0, rel=1e-12)


def test_removing_a_position_restores_depth():
    pool, i = _ladder()
    pool.remove_position("tight")
    assert pool.liquidity == pytest.approx(1e4)
    pool.swap(pm.SELL, 10.0)
    with pytest.raises(DomainError):
        pool.add_position("wide", pm.LiquidityPosition(pm.Tick(i - 1), pm.Tick(i + 1), 1.0))
