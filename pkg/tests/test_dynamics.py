import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ammkit.dynamics import (
    CirParams,
    ModelIIParams,
    ModelIParams,
    MultiOUParams,
    OrderFlowParams,
    cir_mean,
    model1_mean_Z,
    simulate_cir,
    simulate_depth,
    simulate_model1,
    simulate_multi_ou,
    simulate_order_flow,
    write_paths_csv,
)
from ammkit.errors import DomainError

P1 = ModelIParams(sigma=0.045, beta=50.0, gamma=0.034, S0=2600.0, Z0=2500.0)


def test_same_seed_same_paths():
    a = simulate_model1(P1, 1e-3, 200, seed=11)
    b = simulate_model1(P1, 1e-3, 200, seed=11)
    c = simulate_model1(P1, 1e-3, 200, seed=12)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], c[0])


def test_paths_batch_shapes_and_positivity():
    S, Z = simulate_model1(P1, 1e-3, 100, seed=0, n_paths=7)
    assert S.shape == Z.shape == (7, 101)
    assert np.all(S > 0) and np.all(Z > 0)
    assert S[:, 0].tolist() == [2600.0] * 7


def test_pool_rate_reverts_to_the_oracle_mean():
    t = 0.05
    S, Z = simulate_model1(P1, 1e-4, 500, seed=1, n_paths=4000)
    mean = Z[:, -1].mean()
    se = Z[:, -1].std() / np.sqrt(Z.shape[0])
    assert abs(mean - model1_mean_Z(P1, t)) < 4 * se + 0.5


def test_oracle_is_a_martingale():
    S, _ = simulate_model1(P1, 1e-3, 250, seed=2, n_paths=5000)
    se = S[:, -1].std() / np.sqrt(S.shape[0])
    assert abs(S[:, -1].mean() - P1.S0) < 4 * se


def test_cir_stays_nonnegative_and_tracks_its_mean():
    p = CirParams(Gamma=5.0, pi_bar=0.02, psi=0.2, pi_tilde0=0.0)
    x = simulate_cir(p, 1e-3, 400, seed=3, n_paths=3000)
    assert np.all(x >= 0)
    se = x[:, -1].std() / np.sqrt(3000)
    assert abs(x[:, -1].mean() - cir_mean(p, 0.4)) < 4 * se + 1e-4


def test_multi_ou_mean_and_shape():
    beta = np.array([[3.0, 1.0], [0.0, 2.0]])
    p = MultiOUParams(beta, np.array([1.0, -1.0]), 0.1 * np.eye(2), np.array([0.0, 0.0]))
    R = simulate_multi_ou(p, 0.01, 600, seed=4, n_paths=500)
    assert R.shape == (500, 601, 2)
    assert np.allclose(R[:, -1].mean(axis=0), [1.0, -1.0], atol=0.02)


def test_depth_paths_are_independent_of_each_other():
    Z, k = simulate_depth(ModelIIParams(0.02, 0.1, 2000.0, 1e7), 1e-3, 300, seed=5, n_paths=2000)
    rz = np.diff(np.log(Z), axis=1).ravel()
    rk = np.diff(np.log(k), axis=1).ravel()
    assert abs(np.corrcoef(rz, rk)[0, 1]) < 0.01


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_order_flow_is_ordered_and_bounded(lam, p, seed):
    flow = simulate_order_flow(OrderFlowParams(lam, p, 100.0, 30.0), 600.0, seed)
    assert np.all(np.diff(flow.times) > 0)
    assert np.all((flow.times >= 0) & (flow.times < 600.0))
    assert np.all(flow.sizes >= 0)
    assert len(flow) == flow.is_buy.shape[0] == flow.sizes.shape[0]


def test_order_flow_rate_and_side_frequency():
    flow = simulate_order_flow(OrderFlowParams(2.0, 0.7, 100.0, 0.0), 50_000.0, seed=6)
    assert len(flow) / 50_000.0 == pytest.approx(2.0, rel=0.02)
    assert flow.is_buy.mean() == pytest.approx(0.7, abs=0.01)
    assert np.all(flow.sizes == 100.0)


@pytest.mark.parametrize(
    "build",
    [
        lambda: ModelIParams(-1.0, 1.0, 1.0, 1.0, 1.0),
        lambda: ModelIParams(1.0, 1.0, 1.0, 0.0, 1.0),
        lambda: ModelIIParams(0.1, 0.1, 1.0, -1.0),
        lambda: CirParams(0.0, 0.1, 0.1, 0.0),
        lambda: OrderFlowParams(0.0, 0.5, 1.0, 0.0),
        lambda: OrderFlowParams(1.0, 1.5, 1.0, 0.0),
    ],
)
def test_invalid_parameters_are_rejected(build):
    with pytest.raises(DomainError):
        build()


def test_invalid_step_is_rejected():
    with pytest.raises(DomainError):
        simulate_model1(P1, 0.0, 10, seed=0)


def test_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 1.0, 5)
    path = tmp_path / "p.csv"
    write_paths_csv(path, t, {"S": t * 2, "Z": t + 0.1})
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "S", "Z"]
    assert float(rows[-1][2]) == 1.1
