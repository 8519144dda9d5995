import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ammkit.errors import DomainError
from ammkit.lp_strategy import (
    LpParams,
    LpWealthState,
    SpreadQuote,
    fit_concentration_cost,
    log_growth_rate,
    lp_wealth_step,
    optimal_spread,
    position_asymmetry,
    range_bounds,
    spread_to_ticks,
    viability_check,
    with_drift,
)
from ammkit.pool_mechanics import rate_of_tick

BASE = LpParams(gamma_c=5e-7, sigma=0.05)

draws = st.tuples(
    st.floats(1e-8, 1e-5),  # gamma_c
    st.floats(0.005, 0.1),  # sigma
    st.floats(10**-3.5, 10**-1.5),  # pi
    st.floats(-2e-5, 2e-5),  # mu
)


def _quote(d):
    g, s, pi, mu = d
    params = LpParams(gamma_c=g, sigma=s, mu=mu)
    q = optimal_spread(pi, params)
    assume(q.status == "ok")
    return pi, params, q


@given(draws)
def test_optimum_is_a_stationary_point_of_the_growth_rate(d):
    pi, params, q = _quote(d)
    h = 1e-4 * q.delta
    up, mid, down = log_growth_rate(np.array([q.delta + h, q.delta, q.delta - h]), pi, params)
    assert mid >= max(up, down) - 1e-12 * abs(mid)


@given(draws)
def test_skew_and_range_relations(d):
    pi, params, q = _quote(d)
    assert q.rho == pytest.approx(0.5 + params.drift / q.delta)
    assert q.Z_L < q.Z < q.Z_U
    assert math.sqrt(q.Z_U) * (1 - q.delta_U / 2) == pytest.approx(math.sqrt(q.Z))
    assert math.sqrt(q.Z_L) == pytest.approx(math.sqrt(q.Z) * (1 - q.delta_L / 2))


def test_zero_drift_gives_a_symmetric_range():
    q = optimal_spread(0.01, BASE, Z=2000.0)
    assert q.delta_L == q.delta_U
    assert q.delta == pytest.approx(2 * BASE.gamma_c / (4 * 0.01 - BASE.sigma**2 / 2))


def test_rebalancing_costs_act_as_negative_drift():
    a = optimal_spread(0.01, LpParams(5e-7, 0.05, zeta_rebal=1e-5))
    b = optimal_spread(0.01, LpParams(5e-7, 0.05, mu=-1e-5))
    assert a.delta_L == pytest.approx(b.delta_L) and a.delta_U == pytest.approx(b.delta_U)


def test_unprofitable_pools_get_the_widest_range():
    q = optimal_spread(1e-5, BASE)
    assert q.status == "max-range" and not q.viable and math.isinf(q.Z_U)
    report = viability_check(1e-5, BASE)
    assert not report.viable and report.binding in report.checks
    assert report.threshold == pytest.approx(BASE.sigma**2 / 8)


def test_extreme_drift_is_refused():
    assert optimal_spread(0.01, with_drift(BASE, 1.5)).status == "refused"
    with pytest.raises(DomainError):
        optimal_spread(0.0, BASE)
    with pytest.raises(DomainError):
        LpParams(gamma_c=-1.0, sigma=0.1)


def test_position_asymmetry_flags_inadmissible_skews():
    assert position_asymmetry(0.1, 0.01).admissible
    r = position_asymmetry(0.1, 0.06)
    assert r.rho == pytest.approx(1.1) and not r.admissible
    with pytest.raises(DomainError):
        position_asymmetry(0.0, 0.0)


def test_range_bounds_edge_cases():
    assert range_bounds(4.0, 2.0, 2.0) == (0.0, math.inf)
    lo, hi = range_bounds(4.0, 0.2, 0.2)
    assert lo == pytest.approx(3.24) and hi == pytest.approx(4.0 / 0.81)


def test_wealth_step_without_price_move():
    q = optimal_spread(0.01, BASE)
    s = lp_wealth_step(LpWealthState.start(100.0), q, 0.0, 0.01, BASE, 0.1)
    fee = 100.0 * (4 * 0.01 / q.delta - BASE.gamma_c / q.delta**2) * 0.1
    drag = 100.0 * BASE.sigma**2 / (2 * q.delta) * 0.1
    assert s.fees == pytest.approx(fee)
    assert s.V == pytest.approx(100.0 + fee - drag)
    assert s.costs == 0.0 and not s.ruined


def test_wealth_step_tracks_the_skewed_exposure():
    params = with_drift(BASE, 1e-5)
    q = optimal_spread(0.01, params)
    up = lp_wealth_step(LpWealthState.start(1.0), q, 0.01, 0.01, params, 1e-6)
    down = lp_wealth_step(LpWealthState.start(1.0), q, -0.01, 0.01, params, 1e-6)
    assert (up.V - down.V) / 0.02 == pytest.approx(q.rho, rel=1e-6)


def test_ruin_is_absorbing():
    q = optimal_spread(0.01, BASE)
    s = lp_wealth_step(LpWealthState.start(1.0), q, -1e6, 0.01, BASE, 1e-3)
    assert s.ruined
    assert lp_wealth_step(s, q, 0.5, 0.01, BASE, 1e-3) is s
    with pytest.raises(DomainError):
        lp_wealth_step(LpWealthState.start(1.0), optimal_spread(1e-5, BASE), 0.0, 1e-5, BASE, 1e-3)


def test_concentration_fit_recovers_parameters():
    deltas = np.linspace(0.01, 0.5, 12)
    m, pi, g = 0.7, 0.01, 2e-6
    p_hat = m * (4 * pi / deltas - g / deltas**2)
    fit = fit_concentration_cost(deltas, p_hat, m)
    assert fit.pi == pytest.approx(pi) and fit.gamma_c == pytest.approx(g)
    with pytest.raises(DomainError):
        fit_concentration_cost([0.1, 0.1], [1.0, 2.0], m)


@given(st.floats(10.0, 5000.0), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_tick_range_contains_the_quote(Z, dL, dU):
    Z_L, Z_U = range_bounds(Z, dL, dU)
    q = SpreadQuote(dL, dU, Z_L, Z_U, True, Z)
    r = spread_to_ticks(q)
    assert rate_of_tick(r.lower.index) <= Z_L * (1 + 1e-12)
    assert rate_of_tick(r.upper.index) >= Z_U * (1 - 1e-12)
    assert rate_of_tick(r.lower.index) < Z <= rate_of_tick(r.upper.index)


def test_max_range_maps_to_full_range_ticks():
    r = spread_to_ticks(optimal_spread(1e-5, BASE, Z=2000.0))
    assert r.full_range
