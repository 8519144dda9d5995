import csv

import numpy as np
import pytest

from ammkit.dynamics import ModelIIParams, ModelIParams
from ammkit.errors import ConvergenceError, DomainError
from ammkit.execution_strategies import GridClampWarning, LiquidationConfig, solve_scalar_coefficients
from ammkit.hjb_solver import (
    Grid3D,
    feedback_speed_from_solution,
    merton_C_closed_form,
    merton_coefficients,
    model1_grid,
    model2_grid,
    solve_model1_pde,
    solve_model2_pde,
    verify_bounds,
)

CFG = LiquidationConfig(T=0.1, phi=1e-5, alpha=5.0, eta=1.0, kappa=1e7)
P1 = ModelIParams(sigma=0.03, beta=1.0, gamma=0.02, S0=2000.0, Z0=2000.0)
P2 = ModelIIParams(gamma=0.02, varsigma=0.1, Z0=2000.0, kappa0=1e7)


@pytest.fixture(scope="module")
def model1():
    return solve_model1_pde(P1, CFG, model1_grid(P1, CFG, (32, 24, 24)))


def test_model1_solution_respects_its_bounds(model1):
    assert all(v <= 1e-8 for v in verify_bounds(model1).values())
    assert np.all(model1.theta2[-1] == -CFG.alpha)
    assert np.all(model1.theta1[-1] == 0.0) and np.all(model1.theta0[-1] == 0.0)


def test_model1_speed_signs(model1):
    assert feedback_speed_from_solution(model1, 0.0, 100.0, (2000.0, 2000.0)) > 0
    assert feedback_speed_from_solution(model1, 0.0, 0.0, (2000.0, 2010.0)) < 0
    with pytest.warns(GridClampWarning):
        feedback_speed_from_solution(model1, 0.0, 1.0, (1.0, 2000.0))


def test_model2_bounds_and_vanishing_linear_terms():
    sol = solve_model2_pde(P2, CFG, model2_grid(P2, CFG, (32, 24, 24)))
    v = verify_bounds(sol)
    assert v["theta2_lower"] == 0.0 and v["theta2_upper"] == 0.0
    assert v["theta1_abs"] == 0.0 and v["theta0_abs"] == 0.0


def test_model2_deeper_pools_trade_faster():
    sol = solve_model2_pde(P2, CFG, model2_grid(P2, CFG, (32, 16, 16)))
    k = sol.grid.v_axis
    speeds = [feedback_speed_from_solution(sol, 0.0, 100.0, (2000.0, kk)) for kk in (k[2], k[-3])]
    assert 0 < speeds[0] < speeds[1]


def test_flat_limits_agree_with_each_other_and_with_the_ode():
    """Without depth noise or reversion both PDEs collapse to the scalar Riccati equation."""
    p1 = ModelIParams(sigma=0.03, beta=0.0, gamma=0.02, S0=2000.0, Z0=2000.0)
    p2 = ModelIIParams(gamma=0.02, varsigma=0.0, Z0=2000.0, kappa0=1e7)
    errors = []
    for nt in (257, 1025):
        u = model1_grid(p1, CFG, (nt, 16, 5)).u_axis
        a = solve_model2_pde(p2, CFG, Grid3D(np.linspace(0, 0.1, nt), u, np.array([9e6, 1e7, 1.1e7])))
        b = solve_model1_pde(p1, CFG, Grid3D(np.linspace(0, 0.1, nt), u, np.array([1990.0, 2000.0, 2010.0])))
        ode = solve_scalar_coefficients(CFG, 0.0, u).A[0]
        assert np.max(np.abs(a.theta2[0, :, 1] - b.theta2[0, :, 1])) < 0.02 * np.max(np.abs(ode))
        errors.append(np.max(np.abs(a.theta2[0, :, 1] - ode) / np.abs(ode)))
    assert errors[0] < 0.02
    assert errors[1] < errors[0] / 2


def test_merton_envelope_matches_its_closed_form():
    t = np.linspace(0.0, 0.1, 41)
    _, _, C = merton_coefficients(P1, CFG, t)
    assert np.allclose(C, merton_C_closed_form(P1, CFG, t), rtol=1e-8, atol=1e-8 * np.max(np.abs(C)))


def test_grids_are_validated():
    with pytest.raises(DomainError):
        Grid3D(np.array([0.0, 1.0]), np.arange(3.0), np.arange(3.0))
    with pytest.raises(DomainError):
        Grid3D(np.array([0.0, 2.0, 1.0]), np.arange(3.0), np.arange(3.0))
    g = model1_grid(P1, CFG, (8, 4, 4))
    bad = Grid3D(np.array([0.0, 0.01, 0.05, 0.1]), g.u_axis, g.v_axis)
    with pytest.raises(DomainError):
        solve_model1_pde(P1, CFG, bad)
    with pytest.raises(DomainError):
        verify_bounds(solve_model2_pde(P2, CFG, model2_grid(P2, CFG, (64, 3, 3))), which="model3")


def test_too_coarse_time_step_reports_non_convergence():
    with pytest.raises(ConvergenceError):
        solve_model2_pde(P2, CFG, model2_grid(P2, CFG, (4, 3, 3)))


def test_solution_csv(tmp_path):
    sol = solve_model2_pde(P2, CFG, model2_grid(P2, CFG, (64, 3, 3)))
    path = tmp_path / "sol.csv"
    sol.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "u", "v", "theta0", "theta1", "theta2"]
    assert len(rows) == 1 + 64 * 3 * 3
