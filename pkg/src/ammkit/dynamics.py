"""Monte Carlo simulators for the rate, depth, fee-rate and order-flow models.

Time is measured in days unless a docstring says otherwise.  Each Brownian
driver draws from its own spawned Philox stream (see :mod:`ammkit.rng`).
Simulators return arrays of shape ``(steps + 1,)`` for a single path or
``(n_paths, steps + 1)`` when ``n_paths`` is given.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import streams


@dataclass(frozen=True)
class ModelIParams:
    """Oracle rate S as driftless GBM; pool rate Z mean-reverting towards S."""

    sigma: float
    beta: float
    gamma: float
    S0: float
    Z0: float

    def __post_init__(self):
        if self.sigma < 0 or self.beta < 0 or self.gamma < 0:
            raise DomainError("sigma, beta and gamma must be nonnegative")
        if not (self.S0 > 0 and self.Z0 > 0):
            raise DomainError("initial rates must be positive")


@dataclass(frozen=True)
class ModelIIParams:
    """Pool rate and pool depth as independent driftless GBMs."""

    gamma: float
    varsigma: float
    Z0: float
    kappa0: float

    def __post_init__(self):
        if self.gamma < 0 or self.varsigma < 0:
            raise DomainError("volatilities must be nonnegative")
        if not (self.Z0 > 0 and self.kappa0 > 0):
            raise DomainError("initial rate and depth must be positive")


@dataclass(frozen=True)
class CirParams:
    """Square-root dynamics of the excess fee rate ``pi - eta``."""

    Gamma: float
    pi_bar: float
    psi: float
    pi_tilde0: float

    def __post_init__(self):
        if self.Gamma <= 0 or self.pi_bar <= 0 or self.psi < 0:
            raise DomainError("Gamma and pi_bar must be positive, psi nonnegative")
        if self.pi_tilde0 < 0:
            raise DomainError("initial excess fee rate must be nonnegative")


@dataclass(frozen=True)
class MultiOUParams:
    """``dR = beta (mu - R) dt + L dW`` with ``L`` the lower Cholesky factor of the covariance."""

    beta_matrix: np.ndarray
    mu: np.ndarray
    sigma_chol: np.ndarray
    R0: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.mu).shape[0]
        for name in ("beta_matrix", "sigma_chol"):
            if np.asarray(getattr(self, name)).shape != (d, d):
                raise DomainError(f"{name} must be {d}x{d}")
        if np.asarray(self.R0).shape != (d,):
            raise DomainError(f"R0 must have length {d}")
        L = np.asarray(self.sigma_chol)
        if np.any(np.triu(L, 1) != 0) or np.any(np.diag(L) < 0):
            raise DomainError("sigma_chol must be lower triangular with nonnegative diagonal")

    @property
    def dim(self) -> int:
        return np.asarray(self.mu).shape[0]

    @property
    def covariance(self) -> np.ndarray:
        L = np.asarray(self.sigma_chol, dtype=float)
        return L @ L.T


@dataclass(frozen=True)
class OrderFlowParams:
    """Poisson arrivals at rate ``lam`` per minute, buy with probability ``p``, sizes in X."""

    lam: float
    p: float
    mu_size: float
    xi_size: float

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("arrival intensity must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("buy probability must lie in [0, 1]")
        if self.mu_size <= 0 or self.xi_size < 0:
            raise DomainError("size mean must be positive and s.d. nonnegative")


@dataclass(frozen=True)
class OrderFlow:
    """Arrival times (minutes), buy flags and sizes (units of X)."""

    times: np.ndarray
    is_buy: np.ndarray
    sizes: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]


def _check_dt(dt: float, steps: int) -> None:
    if not dt > 0:
        raise DomainError("dt must be positive")
    if steps < 0:
        raise DomainError("steps must be nonnegative")


def _shape(n_paths: int | None, steps: int) -> tuple[int, int]:
    return (1 if n_paths is None else n_paths, steps)


def _out(a: np.ndarray, n_paths: int | None) -> np.ndarray:
    return a[0] if n_paths is None else a


def _gbm(x0: float, vol: float, dt: float, eps: np.ndarray) -> np.ndarray:
    incr = -0.5 * vol * vol * dt + vol * np.sqrt(dt) * eps
    logs = np.concatenate([np.zeros((eps.shape[0], 1)), np.cumsum(incr, axis=1)], axis=1)
    return x0 * np.exp(logs)


def simulate_model1(
    params: ModelIParams, dt: float, steps: int, seed: int | None, n_paths: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Paths ``(S, Z)``.

    Both rates use a log-Euler step, so they stay positive; for Z the step is
    ``log Z' - log Z = beta (S - Z) / Z dt - gamma**2 dt / 2 + gamma sqrt(dt) eps``.
    """
    _check_dt(dt, steps)
    gW, gB = streams(seed, 2)
    shape = _shape(n_paths, steps)
    eW = gW.standard_normal(shape)
    eB = gB.standard_normal(shape)
    S = _gbm(params.S0, params.sigma, dt, eW)
    Z = np.empty_like(S)
    Z[:, 0] = params.Z0
    drift_c = -0.5 * params.gamma**2 * dt
    shock = params.gamma * np.sqrt(dt) * eB
    for k in range(steps):
        z = Z[:, k]
        Z[:, k + 1] = z * np.exp(params.beta * (S[:, k] - z) / z * dt + drift_c + shock[:, k])
    return _out(S, n_paths), _out(Z, n_paths)


def model1_mean_Z(params: ModelIParams, t: float) -> float:
    """Conditional mean of ``Z_t`` given the initial state."""
    decay = np.exp(-params.beta * t)
    return params.Z0 * decay + params.S0 * (1.0 - decay)


def simulate_cir(
    params: CirParams, dt: float, steps: int, seed: int | None, n_paths: int | None = None
) -> np.ndarray:
    """Full-truncation Euler path of the excess fee rate; reported values are ``max(x, 0)``."""
    _check_dt(dt, steps)
    (g,) = streams(seed, 1)
    eps = g.standard_normal(_shape(n_paths, steps))
    x = np.empty((eps.shape[0], steps + 1))
    x[:, 0] = params.pi_tilde0
    sq = np.sqrt(dt)
    for k in range(steps):
        xp = np.maximum(x[:, k], 0.0)
        x[:, k + 1] = x[:, k] + params.Gamma * (params.pi_bar - xp) * dt + params.psi * np.sqrt(xp) * sq * eps[:, k]
    return _out(np.maximum(x, 0.0), n_paths)


def cir_mean(params: CirParams, t: float) -> float:
    return params.pi_bar + (params.pi_tilde0 - params.pi_bar) * np.exp(-params.Gamma * t)


def simulate_multi_ou(
    params: MultiOUParams, dt: float, steps: int, seed: int | None, n_paths: int | None = None
) -> np.ndarray:
    """Euler paths of the multivariate OU process; shape ``(..., steps + 1, dim)``."""
    _check_dt(dt, steps)
    beta = np.asarray(params.beta_matrix, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    L = np.asarray(params.sigma_chol, dtype=float)
    d = params.dim
    (g,) = streams(seed, 1)
    m = 1 if n_paths is None else n_paths
    eps = g.standard_normal((steps, m, d))
    R = np.empty((m, steps + 1, d))
    R[:, 0] = np.asarray(params.R0, dtype=float)
    sq = np.sqrt(dt)
    for k in range(steps):
        r = R[:, k]
        R[:, k + 1] = r + (mu - r) @ beta.T * dt + sq * eps[k] @ L.T
    return _out(R, n_paths)


def simulate_order_flow(params: OrderFlowParams, horizon: float, seed: int | None) -> OrderFlow:
    """Liquidity-taking orders over ``[0, horizon)`` minutes.

    Sizes are normal draws clipped at zero.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    g_arr, g_side, g_size = streams(seed, 3)
    times = []
    t = 0.0
    # draw inter-arrival gaps in blocks until the horizon is passed
    block = max(16, int(params.lam * horizon * 1.2) + 16)
    while True:
        gaps = g_arr.exponential(1.0 / params.lam, size=block)
        cum = t + np.cumsum(gaps)
        inside = cum[cum < horizon]
        times.append(inside)
        if inside.shape[0] < block:
            break
        t = cum[-1]
    times = np.concatenate(times)
    n = times.shape[0]
    is_buy = g_side.random(n) < params.p
    sizes = np.maximum(g_size.normal(params.mu_size, params.xi_size, size=n), 0.0)
    return OrderFlow(times, is_buy, sizes)


def simulate_depth(
    params: ModelIIParams, dt: float, steps: int, seed: int | None, n_paths: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Paths ``(Z, kappa)`` from independent drivers, both by exact log-Euler steps."""
    _check_dt(dt, steps)
    gB, gL = streams(seed, 2)
    shape = _shape(n_paths, steps)
    Z = _gbm(params.Z0, params.gamma, dt, gB.standard_normal(shape))
    kappa = _gbm(params.kappa0, params.varsigma, dt, gL.standard_normal(shape))
    return _out(Z, n_paths), _out(kappa, n_paths)


def write_paths_csv(path, t: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    """Write one row per time: ``t`` followed by one column per coordinate."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for k in range(len(t)):
            w.writerow([repr(float(t[k])), *(repr(float(columns[n][k])) for n in names)])
