"""Optimal liquidation and speculation speeds in constant-product pools.

The trading speed ``nu`` is in units of Y per day; ``nu > 0`` sells Y into
the pool (inventory falls at rate ``nu``) and ``nu < 0`` buys.

Single asset
    ``nu = -(A / (eta zeta)) y + (B / (2 eta zeta)) (S - Z)`` with
    ``zeta = Z**1.5 / kappa``.  ``A`` and ``B`` solve, for each fixed ``zeta``,

        A' = phi - A**2 / (eta zeta),              A(T) = -alpha
        B' = beta + beta B - A B / (eta zeta),     B(T) = 0

    and are tabulated on a ``(t, Z)`` grid.

Several assets
    ``R = (Z, S, I)`` stacks pool rates, oracle rates and extra signals, with
    ``dR = beta (mu - R) dt + ...``.  With ``D = diag(zeta)``,

        A' = phi Sigma - A D^{-1} A / eta,          A(T) = -alpha
        B' = (X + B) beta - A D^{-1} B / eta,       B(T) = 0

    where ``X = [I_n, 0]`` selects the pool-rate block, and
    ``nu = D^{-1} (B (mu - R) - 2 A y) / (2 eta)``.

The coefficient ODEs are stiff near maturity (rates of order ``alpha / (eta
zeta)``), so they are integrated with classical RK4 on a time grid graded
towards ``T`` and with adaptive substeps between grid nodes.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


class GridClampWarning(UserWarning):
    """A query fell outside a tabulated grid and was clamped to its edge."""


@dataclass(frozen=True)
class LiquidationConfig:
    T: float
    phi: float
    alpha: float
    eta: float
    kappa: float
    y0: float = 0.0

    def __post_init__(self):
        if self.T <= 0 or self.phi < 0:
            raise DomainError("T must be positive and phi nonnegative")
        if self.alpha <= 0 or self.eta <= 0 or self.kappa <= 0:
            raise DomainError("alpha, eta and kappa must be positive")

    def impact(self, Z):
        """``eta * zeta`` at rate ``Z``: the quadratic cost coefficient of trading."""
        return self.eta * np.asarray(Z, dtype=float) ** 1.5 / self.kappa


# ---------------------------------------------------------------------------
# grids and integration


def graded_time_grid(T: float, n: int, d: float, kind: str = "geometric") -> np.ndarray:
    """``n`` ascending nodes on ``[0, T]`` that cluster near ``T`` on the scale ``d``.

    ``kind="geometric"`` spaces time-to-maturity ``tau`` proportionally to
    ``tau + d``; ``kind="hyperbolic"`` spaces it proportionally to
    ``(tau + d)**2``, which equalises the second-order finite-difference error
    of functions behaving like ``1 / (tau + d)``.
    """
    if n < 2:
        raise DomainError("need at least two nodes")
    d = float(min(max(d, 1e-12 * T), T))
    s = np.linspace(0.0, 1.0, n)
    if kind == "geometric":
        tau = d * np.expm1(s * math.log1p(T / d))
    elif kind == "hyperbolic":
        tau = 1.0 / ((1.0 - s) / d + s / (T + d)) - d
    elif kind == "uniform":
        tau = s * T
    else:
        raise DomainError(f"unknown grid kind {kind!r}")
    tau[0], tau[-1] = 0.0, T
    return T - tau[::-1]


def default_Z_grid(Z0: float, sigma: float, T: float, n: int = 128) -> np.ndarray:
    """Rates spanning five log-standard-deviations around ``Z0``."""
    w = 5.0 * sigma * math.sqrt(T)
    return Z0 * np.exp(np.linspace(-w, w, n))


def _rk4_backward(rhs, y_T, t, rate, h_cap=math.inf, safety=0.1):
    """Integrate ``dy/dt = rhs(t, y)`` from ``t[-1]`` down to ``t[0]``.

    ``rate(y)`` bounds the local stiffness; each grid interval is split into
    equal substeps no longer than ``safety / rate``.  Returns the states at
    every node (first axis indexed like ``t``).
    """
    out = np.empty((len(t),) + np.shape(y_T))
    y = np.array(y_T, dtype=float)
    out[-1] = y
    for k in range(len(t) - 1, 0, -1):
        h_total = t[k] - t[k - 1]
        m = max(1, math.ceil(h_total * rate(y) / safety), math.ceil(h_total / h_cap))
        h = -h_total / m
        s = t[k]
        for _ in range(m):
            k1 = rhs(s, y)
            k2 = rhs(s + h / 2, y + h / 2 * k1)
            k3 = rhs(s + h / 2, y + h / 2 * k2)
            k4 = rhs(s + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
        out[k - 1] = y
    return out


def _bracket(grid: np.ndarray, v):
    """Left index and weight for linear interpolation, clamping to the grid."""
    v = np.asarray(v, dtype=float)
    clamped = bool(np.any(v < grid[0]) or np.any(v > grid[-1]))
    vc = np.clip(v, grid[0], grid[-1])
    if len(grid) == 1:
        return np.zeros(vc.shape, dtype=int), np.zeros(vc.shape), clamped
    i = np.clip(np.searchsorted(grid, vc, side="right") - 1, 0, len(grid) - 2)
    w = (vc - grid[i]) / (grid[i + 1] - grid[i])
    return i, w, clamped


# ---------------------------------------------------------------------------
# single asset


@dataclass(frozen=True)
class ScalarCoefficients:
    """``A`` and ``B`` tabulated on ``t`` (rows) by ``Z`` (columns).

    ``extra`` holds the remaining value-function coefficients ``C, E, F, G``
    (the others vanish identically).
    """

    t: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    B: np.ndarray
    extra: dict = field(default_factory=dict)

    def lookup(self, t, Z):
        """Bilinear interpolation of ``(A, B)``; the flag reports clamping."""
        i, wt, c1 = _bracket(self.t, t)
        j, wz, c2 = _bracket(self.Z, Z)
        out = []
        for M in (self.A, self.B):
            if M.shape[1] == 1:
                col = M[:, 0]
                out.append(col[i] * (1 - wt) + col[np.minimum(i + 1, len(col) - 1)] * wt)
                continue
            i1 = np.minimum(i + 1, M.shape[0] - 1)
            lo = M[i, j] * (1 - wz) + M[i, j + 1] * wz
            hi = M[i1, j] * (1 - wz) + M[i1, j + 1] * wz
            out.append(lo * (1 - wt) + hi * wt)
        return out[0], out[1], c1 or c2

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "Z", "A", "B"])
            for a in range(len(self.t)):
                for b in range(len(self.Z)):
                    w.writerow([repr(float(v)) for v in (self.t[a], self.Z[b], self.A[a, b], self.B[a, b])])


def solve_scalar_coefficients(
    config: LiquidationConfig,
    beta: float,
    Z_grid,
    t_grid=None,
    n_t: int = 256,
    gamma: float = 0.0,
    sigma: float = 0.0,
    h_cap: float = math.inf,
) -> ScalarCoefficients:
    """Solve the coefficient ODEs for every rate in ``Z_grid``.

    ``gamma`` and ``sigma`` (pool-rate and oracle volatilities) only affect the
    diagnostic coefficients in ``extra``.
    """
    Z = np.atleast_1d(np.asarray(Z_grid, dtype=float))
    if np.any(Z <= 0):
        raise DomainError("rates must be positive")
    if len(Z) > 1 and np.any(np.diff(Z) <= 0):
        raise DomainError("rate grid must be strictly increasing")
    c = config.impact(Z)
    phi, alpha = config.phi, config.alpha
    if t_grid is None:
        t_grid = graded_time_grid(config.T, n_t, float(c.min()) / alpha)
    t = np.asarray(t_grid, dtype=float)
    if abs(t[-1] - config.T) > 1e-12 * config.T or np.any(np.diff(t) <= 0):
        raise DomainError("time grid must increase and end at T")
    g2b = gamma * gamma - 2.0 * beta

    def rhs(_s, u):
        A, B, E, F, G = u
        C = -B
        return np.stack(
            [
                phi - A * A / c,
                beta + beta * B - A * B / c,
                -g2b * E - B * B / (4 * c),
                -beta * G - sigma * sigma * F - C * C / (4 * c),
                -2 * beta * E + beta * G - B * C / (2 * c),
            ]
        )

    def rate(u):
        return float(np.max(2 * np.abs(u[0]) / c)) + abs(beta) + abs(g2b) + sigma * sigma

    y_T = np.zeros((5, len(Z)))
    y_T[0] = -alpha
    sol = _rk4_backward(rhs, y_T, t, rate, h_cap=h_cap)
    A, B, E, F, G = (sol[:, q, :] for q in range(5))
    A[-1] = -alpha
    B[-1] = 0.0
    return ScalarCoefficients(t, Z, A, B, {"C": -B, "E": E, "F": F, "G": G})


def scalar_A_closed_form(config: LiquidationConfig, Z, t):
    """Hyperbolic-tangent solution of the ``A`` equation (used as an oracle)."""
    c = config.impact(Z)
    k = np.sqrt(config.phi * c)
    th = np.tanh(np.sqrt(config.phi / c) * (config.T - np.asarray(t, dtype=float)))
    a = config.alpha
    return -k * (a + k * th) / (k + a * th)


def closed_form_speed(t, y, Z, S, coeffs: ScalarCoefficients, config: LiquidationConfig):
    """Feedback speed from tabulated coefficients (``nu > 0`` sells Y)."""
    A, B, clamped = coeffs.lookup(t, Z)
    if clamped:
        warnings.warn("state outside the coefficient grid; clamped", GridClampWarning, stacklevel=2)
    c = config.impact(Z)
    nu = -A / c * np.asarray(y, dtype=float) + B / (2 * c) * (np.asarray(S, dtype=float) - np.asarray(Z, dtype=float))
    return float(nu) if np.ndim(nu) == 0 else nu


class PiecewiseStrategy:
    """Constant-``zeta`` strategies glued over a partition of ``[Z_low, Z_high]``.

    Strip ``j`` covers ``[Z_j, Z_{j+1})`` with ``Z_j = Z_low + j (Z_high - Z_low) / N``
    and uses ``zeta_j = Z_j**1.5 / kappa`` throughout; rates outside the
    partition use the nearest end strip.
    """

    def __init__(self, config, beta, Z_low, Z_high, N, t_grid=None, n_t=256):
        if not Z_low < Z_high:
            raise DomainError("need Z_low < Z_high")
        if N < 1:
            raise DomainError("partition size must be at least 1")
        self.config = config
        self.N = int(N)
        self.Z_low, self.Z_high = float(Z_low), float(Z_high)
        self.anchors = Z_low + (Z_high - Z_low) * np.arange(N + 1) / N
        self.coeffs = solve_scalar_coefficients(config, beta, self.anchors[:-1], t_grid=t_grid, n_t=n_t)
        self.c = config.impact(self.anchors[:-1])

    @property
    def t(self) -> np.ndarray:
        return self.coeffs.t

    def strip(self, Z):
        j = np.floor((np.asarray(Z, dtype=float) - self.Z_low) * self.N / (self.Z_high - self.Z_low))
        return np.clip(j, 0, self.N - 1).astype(int)

    def strip_speed(self, j, t, y, Z, S):
        """Speed of the constant-``zeta`` strategy of strip ``j`` at an arbitrary rate."""
        i, w, _ = _bracket(self.coeffs.t, t)
        i1 = np.minimum(i + 1, len(self.coeffs.t) - 1)
        A = self.coeffs.A[i, j] * (1 - w) + self.coeffs.A[i1, j] * w
        B = self.coeffs.B[i, j] * (1 - w) + self.coeffs.B[i1, j] * w
        c = self.c[j]
        return -A / c * y + B / (2 * c) * (S - Z)

    def __call__(self, t, y, Z, S):
        return self.strip_speed(self.strip(Z), t, y, Z, S)

    def max_jump(self, t, y, S) -> float:
        """Largest speed discontinuity across interior strip boundaries at fixed ``(t, y, S)``."""
        j = np.arange(self.N - 1)
        Zb = self.anchors[1:-1]
        left = self.strip_speed(j, t, y, Zb, S)
        right = self.strip_speed(j + 1, t, y, Zb, S)
        return float(np.max(np.abs(left - right))) if self.N > 1 else 0.0


def piecewise_speed(t, y, Z, S, N, Z_low, Z_high, config, beta):
    """One-off evaluation of the partitioned strategy (builds a :class:`PiecewiseStrategy`)."""
    return float(PiecewiseStrategy(config, beta, Z_low, Z_high, N)(t, y, Z, S))


def benchmark_speed(kind: str, t, y, config: LiquidationConfig, *, dt=None, Z=None, coeffs=None):
    """Speeds of the reference schedules.

    ``"twap"``: constant ``y0 / T``.  ``"single"``: the whole inventory in the
    first step of length ``dt``.  ``"ac"``: the inventory term of the optimal
    speed alone (no rate-spread signal).
    """
    if kind == "twap":
        return config.y0 / config.T if t < config.T else 0.0
    if kind == "single":
        if dt is None:
            raise DomainError("single-order schedule needs the step length dt")
        return y / dt if t < dt else 0.0
    if kind == "ac":
        if Z is None or coeffs is None:
            raise DomainError("Almgren-Chriss speed needs Z and coefficients")
        A, _, _ = coeffs.lookup(t, Z)
        return float(-A / config.impact(Z) * y)
    raise DomainError(f"unknown benchmark {kind!r}")


# ---------------------------------------------------------------------------
# several assets


@dataclass(frozen=True)
class MultiAssetConfig:
    """Liquidation problem in ``n`` pools with ``m`` extra signals.

    ``alpha`` is the ``n x n`` terminal penalty matrix (a scalar means
    ``alpha * I``).
    """

    T: float
    phi: float
    alpha: np.ndarray
    eta: float
    n: int
    m: int = 0

    def alpha_matrix(self) -> np.ndarray:
        a = np.asarray(self.alpha, dtype=float)
        return a * np.eye(self.n) if a.ndim == 0 else a

    @property
    def state_dim(self) -> int:
        return 2 * self.n + self.m


@dataclass(frozen=True)
class MatrixCoefficients:
    t: np.ndarray
    A: np.ndarray  # (len(t), n, n)
    B: np.ndarray  # (len(t), n, 2n+m)
    zeta: np.ndarray
    mu: np.ndarray

    def lookup(self, t):
        i, w, clamped = _bracket(self.t, t)
        i1 = min(int(i) + 1, len(self.t) - 1)
        A = self.A[i] * (1 - w) + self.A[i1] * w
        B = self.B[i] * (1 - w) + self.B[i1] * w
        return A, B, clamped


def solve_matrix_coefficients(
    config: MultiAssetConfig,
    zeta_vector,
    beta_matrix,
    Sigma_tilde,
    mu=None,
    t_grid=None,
    n_t: int = 256,
) -> MatrixCoefficients:
    """Backward RK4 solution of the matrix Riccati equation and its linear companion."""
    n, dim = config.n, config.state_dim
    zeta = np.asarray(zeta_vector, dtype=float).reshape(n)
    if np.any(zeta <= 0):
        raise DomainError("zeta must be positive componentwise")
    beta = np.asarray(beta_matrix, dtype=float)
    Sig = np.asarray(Sigma_tilde, dtype=float)
    if beta.shape != (dim, dim) or Sig.shape != (n, n):
        raise DomainError("inconsistent dimensions")
    if not np.allclose(Sig, Sig.T) or np.linalg.eigvalsh(Sig).min() < -1e-12:
        raise DomainError("Sigma_tilde must be symmetric positive semidefinite")
    alpha = config.alpha_matrix()
    Dinv_eta = 1.0 / (config.eta * zeta)
    X = np.hstack([np.eye(n), np.zeros((n, dim - n))])
    if t_grid is None:
        scale = float((config.eta * zeta).min()) / float(np.abs(np.linalg.eigvalsh(alpha)).max())
        t_grid = graded_time_grid(config.T, n_t, scale)
    t = np.asarray(t_grid, dtype=float)
    beta_norm = float(np.abs(np.linalg.eigvals(beta)).max()) if dim else 0.0

    def rhs(_s, u):
        A = u[:, :n]
        B = u[:, n:]
        ADinv = A * Dinv_eta[None, :]
        dA = config.phi * Sig - ADinv @ A
        dB = (X + B) @ beta - ADinv @ B
        return np.hstack([dA, dB])

    def rate(u):
        A = u[:, :n]
        return 2.0 * float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.T))).max()) * float(Dinv_eta.max()) + beta_norm

    u_T = np.hstack([-alpha, np.zeros((n, dim))])
    sol = _rk4_backward(rhs, u_T, t, rate)
    A = sol[:, :, :n]
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    B = sol[:, :, n:]
    A[-1] = -alpha
    B[-1] = 0.0
    mu = np.zeros(dim) if mu is None else np.asarray(mu, dtype=float)
    return MatrixCoefficients(t, A, B, zeta, mu)


def matrix_A_closed_form(config: MultiAssetConfig, zeta_vector, Sigma_tilde, t):
    """Closed-form Riccati solution via the linearising substitution.

    With ``Q = D^{-1/2} A D^{-1/2} / eta`` the equation becomes
    ``dQ/dtau = Q**2 - Psi`` in time-to-maturity, ``Psi = (phi/eta) D^{-1/2} Sigma D^{-1/2}``.
    Writing ``Q = -W' W^{-1}`` gives ``W'' = Psi W`` with ``W(0) = I`` and
    ``W'(0) = -Q(T)``, solved by hyperbolic functions of ``sqrt(Psi)``.
    """
    zeta = np.asarray(zeta_vector, dtype=float)
    n = config.n
    Dm = np.diag(1.0 / np.sqrt(zeta))
    Psi = config.phi / config.eta * Dm @ np.asarray(Sigma_tilde, dtype=float) @ Dm
    Q_T = -Dm @ config.alpha_matrix() @ Dm / config.eta
    lam, V = np.linalg.eigh(0.5 * (Psi + Psi.T))
    lam = np.maximum(lam, 0.0)
    r = np.sqrt(lam)
    tau = config.T - float(t)
    cosh = np.cosh(r * tau)
    sinh_over = np.where(r > 0, np.sinh(r * tau) / np.where(r > 0, r, 1.0), tau)
    r_sinh = r * np.sinh(r * tau)
    # functions of Psi in its eigenbasis
    C = V @ np.diag(cosh) @ V.T
    Sov = V @ np.diag(sinh_over) @ V.T
    RS = V @ np.diag(r_sinh) @ V.T
    W = C - Sov @ Q_T
    dW = RS - C @ Q_T
    Q = -dW @ np.linalg.inv(W)
    Dp = np.diag(np.sqrt(zeta))
    A = config.eta * Dp @ Q @ Dp
    return 0.5 * (A + A.T) if n > 1 else A


def matrix_B_time_ordered(config: MultiAssetConfig, coeffs: MatrixCoefficients, beta_matrix):
    """``B`` on the coefficient grid from a product of short-interval matrix exponentials.

    Vectorising ``B`` row-major, ``dB/dt = B (beta) + X beta - A D^{-1} B / eta`` is an
    affine system whose generator is frozen at each interval midpoint; the
    affine part is absorbed by augmenting the state with a constant 1.
    """
    from scipy.linalg import expm

    n, dim = config.n, config.state_dim
    beta = np.asarray(beta_matrix, dtype=float)
    Dinv_eta = 1.0 / (config.eta * coeffs.zeta)
    X = np.hstack([np.eye(n), np.zeros((n, dim - n))])
    src = (X @ beta).reshape(-1)
    size = n * dim
    out = np.zeros_like(coeffs.B)
    v = np.zeros(size + 1)
    v[-1] = 1.0
    t = coeffs.t
    for k in range(len(t) - 1, 0, -1):
        Amid = 0.5 * (coeffs.A[k] + coeffs.A[k - 1])
        M = Amid * Dinv_eta[None, :]
        # vec(B beta) = (I_n kron beta^T) vec(B); vec(M B) = (M kron I_dim) vec(B)
        G = np.kron(np.eye(n), beta.T) - np.kron(M, np.eye(dim))
        aug = np.zeros((size + 1, size + 1))
        aug[:size, :size] = G
        aug[:size, size] = src
        v = expm(aug * (t[k - 1] - t[k])) @ v
        out[k - 1] = v[:size].reshape(n, dim)
    return out


def closed_form_speed_multi(t, y_vector, R_vector, coeffs: MatrixCoefficients, kappa_vector, eta):
    """Feedback speeds in all pools; ``zeta`` is re-evaluated at the current pool rates."""
    A, B, clamped = coeffs.lookup(t)
    if clamped:
        warnings.warn("time outside the coefficient grid; clamped", GridClampWarning, stacklevel=2)
    y = np.asarray(y_vector, dtype=float)
    R = np.asarray(R_vector, dtype=float)
    n = y.shape[0]
    zeta = R[:n] ** 1.5 / np.asarray(kappa_vector, dtype=float)
    return (B @ (coeffs.mu - R) - 2.0 * A @ y) / (2.0 * eta * zeta)


def scalar_as_multi(beta: float):
    """Embedding of the one-pool model: ``R = (Z, S)``, ``dZ = beta (S - Z) dt``, ``dS`` driftless."""
    return np.array([[beta, -beta], [0.0, 0.0]]), np.zeros(2), np.ones((1, 1))
