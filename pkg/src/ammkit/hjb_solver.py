"""Finite-difference solvers for the value-function PDEs of the execution problem.

The value function is quadratic in inventory, ``theta2 y**2 + theta1 y + theta0``,
and the coefficients solve (``tau = T - t``, ``r = kappa Z**-1.5 / eta``)

Model I (state ``Z, S``)::

    d_tau theta2 = -phi + L theta2 + r theta2**2,              theta2(T) = -alpha
    d_tau theta1 = beta (S - Z) + L theta1 + r theta2 theta1,   theta1(T) = 0
    d_tau theta0 = L theta0 + r theta1**2 / 4,                 theta0(T) = 0

with ``L = beta (S - Z) d_Z + gamma**2 Z**2 d_ZZ / 2 + sigma**2 S**2 d_SS / 2``.

Model II (state ``Z, kappa``) has ``L = gamma**2 Z**2 d_ZZ / 2 + varsigma**2 kappa**2 d_kk / 2``
and no source in the ``theta1`` equation.

The optimal speed is ``nu = -(r / 2) (2 theta2 y + theta1)`` (positive sells).

Scheme: locally one-dimensional implicit steps for ``L`` (upwind drift,
central diffusion, reflecting Neumann ends), and pointwise reaction steps
whose quadratic term is linearised by Picard iteration.  Model I uses Strang
splitting with trapezoidal reaction half-steps; Model II uses implicit Euler
throughout, which keeps ``theta2`` inside its a-priori bounds exactly.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelIIParams, ModelIParams
from .errors import ConvergenceError, DomainError
from .execution_strategies import GridClampWarning, LiquidationConfig, _bracket, _rk4_backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid3D:
    t_axis: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray

    def __post_init__(self):
        for name in ("t_axis", "u_axis", "v_axis"):
            a = np.asarray(getattr(self, name))
            if a.ndim != 1 or len(a) < 3 or np.any(np.diff(a) <= 0):
                raise DomainError(f"{name} needs at least 3 strictly increasing nodes")

    @classmethod
    def uniform(cls, T, nt, u_range, nu, v_range, nv) -> "Grid3D":
        return cls(np.linspace(0.0, T, nt), np.linspace(*u_range, nu), np.linspace(*v_range, nv))

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.t_axis), len(self.u_axis), len(self.v_axis)


def _log_span(x0: float, vol: float, T: float, width: float = 5.0) -> tuple[float, float]:
    w = width * vol * math.sqrt(T)
    return x0 * math.exp(-w), x0 * math.exp(w)


def model1_grid(params: ModelIParams, config: LiquidationConfig, n=(64, 64, 64)) -> Grid3D:
    """Uniform grid over five log-standard-deviations of Z and S around the initial state."""
    return Grid3D.uniform(
        config.T,
        n[0],
        _log_span(params.Z0, params.gamma, config.T),
        n[1],
        _log_span(params.S0, params.sigma, config.T),
        n[2],
    )


def model2_grid(params: ModelIIParams, config: LiquidationConfig, n=(64, 64, 64)) -> Grid3D:
    return Grid3D.uniform(
        config.T,
        n[0],
        _log_span(params.Z0, params.gamma, config.T),
        n[1],
        _log_span(params.kappa0, max(params.varsigma, 1e-3), config.T),
        n[2],
    )


@dataclass
class PdeSolution:
    """Value-function coefficients on ``grid``; arrays are indexed ``[t, u, v]``."""

    model: str
    grid: Grid3D
    theta0: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    config: LiquidationConfig
    params: object
    picard_iterations: list = field(default_factory=list)

    def rate_factor(self) -> np.ndarray:
        """``r = kappa Z**-1.5 / eta`` on the space grid."""
        Z = self.grid.u_axis[:, None]
        if self.model == "model1":
            kappa = self.config.kappa
        else:
            kappa = self.grid.v_axis[None, :]
        return kappa * Z**-1.5 / self.config.eta * np.ones((1, len(self.grid.v_axis)))

    def to_csv(self, path) -> None:
        g = self.grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "u", "v", "theta0", "theta1", "theta2"])
            for a, t in enumerate(g.t_axis):
                for b, u in enumerate(g.u_axis):
                    for c, v in enumerate(g.v_axis):
                        w.writerow(
                            [repr(float(q)) for q in (t, u, v, self.theta0[a, b, c], self.theta1[a, b, c], self.theta2[a, b, c])]
                        )


# ---------------------------------------------------------------------------
# linear algebra helpers


def _thomas(sub, diag, sup, rhs):
    """Solve tridiagonal systems along axis 0, vectorised over the other axes."""
    n = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[0] = sup[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - sub[i] * cp[i - 1]
        cp[i] = sup[i] / m
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / m
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _implicit_bands(axis: np.ndarray, diff: np.ndarray, drift: np.ndarray, h: float):
    """Bands of ``I - h L`` for ``L = drift d_x + diff d_xx`` along axis 0.

    ``diff`` and ``drift`` broadcast to ``(len(axis), m)``.  Rows sum to one and
    off-diagonals are nonpositive, so the step is monotone.
    """
    dx = axis[1] - axis[0]
    shape = np.broadcast_shapes(np.shape(diff), np.shape(drift))
    Dn = np.broadcast_to(diff, shape) / dx**2
    a = np.broadcast_to(drift, shape)
    up = np.maximum(a, 0.0) / dx
    dn = -np.minimum(a, 0.0) / dx
    sub = -h * (Dn + dn)
    sup = -h * (Dn + up)
    sub = sub.copy()
    sup = sup.copy()
    diag = 1.0 - sub - sup
    # reflecting ends: ghost node mirrors the first interior node, no drift flux
    sub[0] = 0.0
    sup[0] = -2.0 * h * Dn[0]
    diag[0] = 1.0 - sup[0]
    sup[-1] = 0.0
    sub[-1] = -2.0 * h * Dn[-1]
    diag[-1] = 1.0 - sub[-1]
    return sub, diag, sup


class _Transport:
    """Pre-factored LOD sweep: implicit along u, then along v."""

    def __init__(self, grid: Grid3D, diff_u, drift_u, diff_v, h):
        self.u_bands = _implicit_bands(grid.u_axis, diff_u, drift_u, h)
        self.v_bands = _implicit_bands(grid.v_axis, diff_v, 0.0, h)

    def __call__(self, theta):
        x = _thomas(*self.u_bands, theta)
        return _thomas(*self.v_bands, x.T).T


def _picard(rhs, coef, start, tol, max_iters, what):
    """Solve ``x (1 - coef x) = rhs`` pointwise by ``x <- rhs / (1 - coef x)``."""
    x = start
    change = math.inf
    for it in range(1, max_iters + 1):
        new = rhs / (1.0 - coef * x)
        change = float(np.max(np.abs(new - x)))
        x = new
        if change < tol:
            return x, it
    raise ConvergenceError(f"Picard iteration for {what} did not converge in {max_iters} steps", change)


# ---------------------------------------------------------------------------
# solvers


def solve_model1_pde(
    params: ModelIParams,
    config: LiquidationConfig,
    grid: Grid3D | None = None,
    tol: float = 1e-8,
    max_iters: int = 50,
) -> PdeSolution:
    """Backward sweep for Model I; ``u`` is the pool rate Z and ``v`` the oracle rate S."""
    grid = grid or model1_grid(params, config)
    t = grid.t_axis
    Z = grid.u_axis[:, None]
    S = grid.v_axis[None, :]
    nt = len(t)
    shape2 = (len(grid.u_axis), len(grid.v_axis))
    r = np.broadcast_to(config.kappa * Z**-1.5 / config.eta, shape2)
    spread = np.broadcast_to(S - Z, shape2)
    beta, phi = params.beta, config.phi
    diff_u = 0.5 * params.gamma**2 * Z**2
    diff_v = (0.5 * params.sigma**2 * grid.v_axis**2)[:, None]
    drift_u = beta * spread
    if np.any(np.abs(np.diff(t) - (t[1] - t[0])) > 1e-9 * t[-1]):
        raise DomainError("time axis must be uniform")
    h = t[1] - t[0]
    transport = _Transport(grid, diff_u, drift_u, diff_v, h)

    th2 = np.empty((nt,) + shape2)
    th2[-1] = -config.alpha
    iters = []
    q = 0.25 * h * r  # trapezoid weight of a half step
    for k in range(nt - 1, 0, -1):
        x = th2[k]
        x, i1 = _picard(x + q * x * x - 0.5 * h * phi, q, x, tol, max_iters, "theta2")
        x = transport(x)
        x, i2 = _picard(x + q * x * x - 0.5 * h * phi, q, x, tol, max_iters, "theta2")
        th2[k - 1] = x
        iters.append(max(i1, i2))
    log.debug("model1 theta2: Picard iterations per level %s", iters)

    th1 = np.empty_like(th2)
    th1[-1] = 0.0
    src = 0.5 * h * beta * spread
    for k in range(nt - 1, 0, -1):
        mid = 0.5 * (th2[k] + th2[k - 1])
        x = (th1[k] * (1.0 + q * th2[k]) + src) / (1.0 - q * mid)
        x = transport(x)
        th1[k - 1] = (x * (1.0 + q * mid) + src) / (1.0 - q * th2[k - 1])

    th0 = np.empty_like(th2)
    th0[-1] = 0.0
    for k in range(nt - 1, 0, -1):
        mid = 0.5 * (th1[k] + th1[k - 1])
        x = th0[k] + 0.25 * q * (th1[k] ** 2 + mid**2)
        x = transport(x)
        th0[k - 1] = x + 0.25 * q * (mid**2 + th1[k - 1] ** 2)
    return PdeSolution("model1", grid, th0, th1, th2, config, params, iters)


def solve_model2_pde(
    params: ModelIIParams,
    config: LiquidationConfig,
    grid: Grid3D | None = None,
    tol: float = 1e-8,
    max_iters: int = 50,
) -> PdeSolution:
    """Backward sweep for Model II; ``u`` is the pool rate Z and ``v`` the depth kappa."""
    grid = grid or model2_grid(params, config)
    t = grid.t_axis
    Z = grid.u_axis[:, None]
    K = grid.v_axis[None, :]
    nt = len(t)
    r = K * Z**-1.5 / config.eta
    h = t[1] - t[0]
    if np.any(np.abs(np.diff(t) - h) > 1e-9 * t[-1]):
        raise DomainError("time axis must be uniform")
    transport = _Transport(
        grid,
        0.5 * params.gamma**2 * Z**2,
        0.0,
        (0.5 * params.varsigma**2 * grid.v_axis**2)[:, None],
        h,
    )
    th2 = np.empty((nt,) + r.shape)
    th2[-1] = -config.alpha
    iters = []
    for k in range(nt - 1, 0, -1):
        x, it = _picard(th2[k] - h * config.phi, h * r, th2[k], tol, max_iters, "theta2")
        th2[k - 1] = transport(x)
        iters.append(it)
    th1 = np.empty_like(th2)
    th1[-1] = 0.0
    th0 = np.empty_like(th2)
    th0[-1] = 0.0
    for k in range(nt - 1, 0, -1):
        th1[k - 1] = transport(th1[k] / (1.0 - h * r * th2[k - 1]))
        th0[k - 1] = transport(th0[k] + 0.25 * h * r * th1[k - 1] ** 2)
    return PdeSolution("model2", grid, th0, th1, th2, config, params, iters)


# ---------------------------------------------------------------------------
# post-processing


def _trilinear(sol: PdeSolution, arrays, t, u, v):
    g = sol.grid
    i, wt, c1 = _bracket(g.t_axis, t)
    j, wu, c2 = _bracket(g.u_axis, u)
    k, wv, c3 = _bracket(g.v_axis, v)
    out = []
    for F in arrays:
        acc = 0.0
        for di, a in ((0, 1 - wt), (1, wt)):
            for dj, b in ((0, 1 - wu), (1, wu)):
                for dk, c in ((0, 1 - wv), (1, wv)):
                    ii = np.minimum(i + di, F.shape[0] - 1)
                    jj = np.minimum(j + dj, F.shape[1] - 1)
                    kk = np.minimum(k + dk, F.shape[2] - 1)
                    acc = acc + a * b * c * F[ii, jj, kk]
        out.append(acc)
    return out, c1 or c2 or c3


def feedback_speed_from_solution(sol: PdeSolution, t, y, state):
    """Optimal speed at ``(t, y, u, v)``; ``state = (Z, S)`` or ``(Z, kappa)``."""
    u, v = state
    (th2, th1), clamped = _trilinear(sol, (sol.theta2, sol.theta1), t, u, v)
    if clamped:
        warnings.warn("state outside the PDE grid; clamped", GridClampWarning, stacklevel=2)
    kappa = sol.config.kappa if sol.model == "model1" else v
    r = kappa * np.asarray(u, dtype=float) ** -1.5 / sol.config.eta
    nu = -0.5 * r * (2.0 * th2 * np.asarray(y, dtype=float) + th1)
    return float(nu) if np.ndim(nu) == 0 else nu


def merton_coefficients(params: ModelIParams, config: LiquidationConfig, t):
    """Coefficients of the quadratic envelope ``A S^2 + B S Z / 2 + C Z^2``.

    They solve a linear ODE system with zero terminal data (integrated here by
    RK4); ``C`` also has the closed form in :func:`merton_C_closed_form`.
    """
    beta, phi = params.beta, config.phi
    s2, g2b = params.sigma**2, params.gamma**2 - 2 * beta
    k = beta * beta / (4 * phi) if phi > 0 else math.inf

    def rhs(_s, u):
        A, B, C = u
        return np.array([-(s2 * A + 0.5 * beta * B + k), -(-beta * B - 4 * k + 4 * beta * C), -(g2b * C + k)])

    t = np.asarray(t, dtype=float)
    rate = lambda _u: s2 + 2 * abs(beta) + abs(g2b)  # noqa: E731
    sol = _rk4_backward(rhs, np.zeros(3), t, rate, h_cap=(t[-1] - t[0]) / 64 if len(t) > 1 else math.inf)
    return sol[:, 0], sol[:, 1], sol[:, 2]


def merton_C_closed_form(params: ModelIParams, config: LiquidationConfig, t):
    g2b = params.gamma**2 - 2 * params.beta
    tau = config.T - np.asarray(t, dtype=float)
    return -params.beta**2 / (4 * config.phi * g2b) * (1.0 - np.exp(g2b * tau))


def verify_bounds(sol: PdeSolution, which: str | None = None) -> dict[str, float]:
    """Largest violation of each a-priori bound (zero means satisfied)."""
    which = which or sol.model
    g = sol.grid
    tau = (sol.config.T - g.t_axis)[:, None, None]
    floor = -(sol.config.alpha + sol.config.phi * tau)
    pos = lambda a: float(max(np.max(a), 0.0))  # noqa: E731
    if which == "model2":
        return {
            "theta2_lower": pos(floor - sol.theta2),
            "theta2_upper": pos(sol.theta2),
            "theta1_abs": float(np.max(np.abs(sol.theta1))),
            "theta0_abs": float(np.max(np.abs(sol.theta0))),
        }
    if which != "model1":
        raise DomainError(f"unknown model {which!r}")
    p = sol.params
    A, B, C = merton_coefficients(p, sol.config, g.t_axis)
    Z = g.u_axis[None, :, None]
    S = g.v_axis[None, None, :]
    env = A[:, None, None] * S**2 + 0.5 * B[:, None, None] * S * Z + C[:, None, None] * Z**2
    EZT = Z * np.exp(-p.beta * tau) + S * (1.0 - np.exp(-p.beta * tau))
    return {
        "theta2_lower": pos(floor - sol.theta2),
        "theta2_upper": pos(sol.theta2 - env),
        "theta1_lower": pos((EZT - Z) + floor - env - sol.theta1),
        "theta1_upper": pos(sol.theta1 - env + floor),
        "theta0_lower": pos(-sol.theta0),
        "theta0_upper": pos(sol.theta0 - env),
    }
