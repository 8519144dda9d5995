import csv

import numpy as np
import pytest

from ammkit.dynamics import OrderFlowParams
from ammkit.errors import ConfigError, DomainError
from ammkit.sim_env import (
    Action,
    EnvConfig,
    LpEnv,
    PoolConfig,
    criterion,
    fixed_strategy,
    reset,
    run_episode,
    single_pool_config,
)

CFG = single_pool_config(lam=1.0, T=300.0)


def test_episodes_are_reproducible():
    a = run_episode(CFG, fixed_strategy(50, 50), seed=4)
    b = run_episode(CFG, fixed_strategy(50, 50), seed=4)
    c = run_episode(CFG, fixed_strategy(50, 50), seed=5)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.Z, b.Z)
    assert not np.array_equal(a.Z, c.Z)
    assert len(a.times) == CFG.steps + 1 and a.times[-1] == CFG.T


def test_wealth_is_cash_plus_marked_holdings():
    env, state = reset(CFG, 1)
    assert state.V == CFG.V0
    for _ in range(4):
        state, info = env.step(Action.uniform(CFG, 20, 30))
        assert state.V == pytest.approx(state.marked_value(), rel=1e-12)
        assert info.fees[0] + info.fees_rest[0] == pytest.approx(info.fees_charged[0], rel=1e-9)
        assert info.fees[0] > 0 and info.trades[0] > 0


def test_range_is_placed_around_the_active_tick():
    env, state = reset(CFG, 2)
    state, _ = env.step(Action.uniform(CFG, 3, 7))
    p = state.pools[0].position
    assert p.upper_tick.index - p.lower_tick.index >= 3 + 7 + 1


def test_gas_is_charged_only_on_repositioning():
    cfg = single_pool_config(lam=1.0, T=600.0, gas_per_adjust=25.0)
    env, _ = reset(cfg, 3)
    _, first = env.step(Action.uniform(cfg, 10, 10))
    assert first.gas == 25.0 and first.adjusted == (True,)
    seen = set()
    while not env.done:
        tick = env.state.pools[0].tick
        old = env.state.pools[0].position
        _, info = env.step(Action.uniform(cfg, 10, 10))
        moved = old.lower_tick.index != tick - 10
        assert info.gas == (25.0 if moved else 0.0)
        assert (env.state.pools[0].position is old) == (not moved)
        seen.add(moved)
    assert seen == {True, False}


def test_gas_exceeding_wealth_terminates():
    cfg = single_pool_config(lam=1.0, T=300.0, gas_per_adjust=1e9)
    env, _ = reset(cfg, 0)
    state, _ = env.step(Action.uniform(cfg, 10, 10))
    assert state.terminated and env.done
    with pytest.raises(DomainError):
        env.step(Action.uniform(cfg, 10, 10))


def test_two_pools_split_wealth():
    flow = OrderFlowParams(lam=1.0, p=0.5, mu_size=50_000.0, xi_size=5_000.0)
    cfg = EnvConfig(pools=(PoolConfig(flow, 1e7, 0.003, 2000.0), PoolConfig(flow, 5e6, 0.0005, 1.0)), T=120.0)
    env, _ = reset(cfg, 7)
    state, info = env.step(Action((0.25, 0.75), (10, 200), (10, 200)))
    marks = [p.x_held + p.y_held * p.Z for p in state.pools]
    assert marks[1] > marks[0] > 0
    assert len(info.fees) == 2


def test_action_validation():
    with pytest.raises(DomainError):
        Action((0.5, 0.6), (1, 1), (1, 1))
    with pytest.raises(DomainError):
        Action((1.0,), (1.5,), (1,))
    with pytest.raises(DomainError):
        Action((1.0,), (1,), (1, 2))
    env, _ = reset(CFG, 0)
    with pytest.raises(DomainError):
        env.step(Action.uniform(CFG, CFG.max_spread + 1, 1))
    with pytest.raises(DomainError):
        env.step(Action((0.5, 0.5), (1, 1), (1, 1)))
    with pytest.raises(DomainError):
        LpEnv(CFG).step(Action.uniform(CFG, 1, 1))


def test_config_validation():
    with pytest.raises(ConfigError):
        single_pool_config(dt=7.0)
    with pytest.raises(ConfigError):
        EnvConfig(pools=())
    with pytest.raises(ConfigError):
        single_pool_config(tau=1.0)


def test_episode_csv(tmp_path):
    ep = run_episode(CFG, fixed_strategy(5, 5), seed=1)
    path = tmp_path / "ep.csv"
    ep.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "Z0", "l0", "u0", "w0", "fees0", "V"]
    assert len(rows) == CFG.steps + 2
    assert float(rows[-1][-1]) == ep.V_T


def test_criteria():
    v = [1.0, 2.0, 3.0]
    assert criterion(v) == 2.0
    assert criterion(v, gamma_mv=0.5) == pytest.approx(1.5)
    assert criterion(v, "sharpe", V0=1.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        criterion(v, "sharpe")
    with pytest.raises(DomainError):
        criterion([1.0])
