"""Estimators: Model I regressions, VAR fitting, spillover indices and MACD features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import MultiOUParams
from .errors import DataError, DomainError


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    r_squared: float
    residual_variance: float
    residuals: np.ndarray

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.standard_errors


def ols(X, y) -> OlsFit:
    """Ordinary least squares with homoskedastic standard errors."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n <= k:
        raise DataError(f"need more than {k} observations, got {n}")
    if np.linalg.matrix_rank(X) < k:
        raise DomainError("design matrix is singular")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    s2 = float(resid @ resid) / (n - k)
    cov = s2 * np.linalg.inv(X.T @ X)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 0.0
    return OlsFit(coef, np.sqrt(np.diag(cov)), min(max(r2, 0.0), 1.0), s2, resid)


@dataclass(frozen=True)
class Model1Estimate:
    sigma: float
    sigma_se: float
    gamma: float
    gamma_se: float
    beta: float
    beta_se: float
    n: int

    @property
    def beta_t(self) -> float:
        return self.beta / self.beta_se if self.beta_se > 0 else float("inf")


def estimate_model1(S_path, Z_path, dt: float) -> Model1Estimate:
    """Fit the oracle-rate volatility and the pool-rate reversion from sampled paths.

    ``sigma`` comes from the log-return standard deviation of S.  For Z, the
    first pass regresses ``dlog Z`` on an intercept and ``(S - Z) / Z * dt``
    and reads ``gamma`` from the residual scale; the second pass removes the
    implied ``-gamma**2 dt / 2`` intercept and refits the slope through the origin.
    """
    S = np.asarray(S_path, dtype=float)
    Z = np.asarray(Z_path, dtype=float)
    if S.shape != Z.shape or S.ndim != 1:
        raise DataError("S and Z must be matching 1-d paths")
    if S.shape[0] < 31:
        raise DataError("need at least 30 increments")
    if np.any(S <= 0) or np.any(Z <= 0):
        raise DataError("rates must be positive")
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = S.shape[0] - 1
    rS = np.diff(np.log(S))
    sigma = float(rS.std(ddof=1) / np.sqrt(dt))
    rZ = np.diff(np.log(Z))
    x = (S[:-1] - Z[:-1]) / Z[:-1] * dt
    if np.ptp(x) == 0:
        raise DomainError("S - Z regressor is degenerate; beta is unidentified")
    first = ols(np.column_stack([np.ones(n), x]), rZ)
    gamma = float(np.sqrt(first.residual_variance / dt))
    second = ols(x[:, None], rZ + 0.5 * gamma**2 * dt)
    gamma = float(np.sqrt(second.residual_variance / dt))
    scale = np.sqrt(2.0 * (n - 1))
    return Model1Estimate(
        sigma, float(sigma / scale), gamma, float(gamma / scale),
        float(second.coefficients[0]), float(second.standard_errors[0]), n,
    )


def pool_fee_rate(volume_24h, kappa, Z, fee_tier):
    """Daily fee income as a fraction of pool size ``2 kappa sqrt(Z)``."""
    if np.any(np.asarray(kappa) <= 0) or np.any(np.asarray(Z) <= 0):
        raise DomainError("depth and rate must be positive")
    return fee_tier * np.asarray(volume_24h, dtype=float) / (2.0 * np.asarray(kappa) * np.sqrt(Z))


@dataclass(frozen=True)
class VarModel:
    """``R_t = a + sum_l Phi_l R_{t-l} + e_t`` with ``Cov(e) = sigma``."""

    intercept: np.ndarray
    lags: tuple
    sigma: np.ndarray
    intercept_se: np.ndarray | None = None
    lag_se: tuple = ()
    nobs: int = 0

    @property
    def dim(self) -> int:
        return self.intercept.shape[0]

    @property
    def order(self) -> int:
        return len(self.lags)

    def companion(self) -> np.ndarray:
        d, k = self.dim, self.order
        C = np.zeros((d * k, d * k))
        C[:d] = np.hstack(self.lags)
        C[d:, : d * (k - 1)] = np.eye(d * (k - 1))
        return C

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))


def fit_var(data, k: int = 1) -> VarModel:
    """Equation-by-equation least squares for a VAR(k) on the rows of ``data``."""
    Y = np.asarray(data, dtype=float)
    if Y.ndim != 2:
        raise DataError("data must be a (time, variable) matrix")
    T, d = Y.shape
    if k < 1:
        raise DomainError("lag order must be at least 1")
    if T - k <= d * k + 1:
        raise DataError("too few observations for the requested lag order")
    X = np.column_stack([np.ones(T - k)] + [Y[k - l : T - l] for l in range(1, k + 1)])
    target = Y[k:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DomainError("VAR design matrix is singular")
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    dof = X.shape[0] - X.shape[1]
    sigma = resid.T @ resid / dof
    sigma = 0.5 * (sigma + sigma.T)
    xtx_inv = np.diag(np.linalg.inv(X.T @ X))
    se = np.sqrt(np.outer(xtx_inv, np.diag(sigma)))  # (1 + d k, d)
    lags = tuple(coef[1 + l * d : 1 + (l + 1) * d].T for l in range(k))
    lag_se = tuple(se[1 + l * d : 1 + (l + 1) * d].T for l in range(k))
    return VarModel(coef[0], lags, sigma, se[0], lag_se, X.shape[0])


@dataclass(frozen=True)
class OuFromVar:
    params: MultiOUParams
    beta_se: np.ndarray


def var1_to_multi_ou(model: VarModel, dt: float, R0=None) -> OuFromVar:
    """Euler identification of a multivariate OU process from a VAR(1) in levels.

    With ``Pi = Phi_1 - I``: ``beta = -Pi / dt``, ``a = beta mu dt`` and the
    OU covariance is ``sigma / dt``.
    """
    if model.order != 1:
        raise DomainError("mapping is defined for VAR(1) only")
    if not dt > 0:
        raise DomainError("dt must be positive")
    Pi = model.lags[0] - np.eye(model.dim)
    beta = -Pi / dt
    if np.linalg.matrix_rank(beta) < model.dim:
        raise DomainError("mean-reversion matrix is singular; long-run mean unidentified")
    mu = np.linalg.solve(beta * dt, model.intercept)
    L = np.linalg.cholesky(model.sigma / dt)
    R0 = mu if R0 is None else np.asarray(R0, dtype=float)
    se = model.lag_se[0] / dt if model.lag_se else np.full_like(beta, np.nan)
    return OuFromVar(MultiOUParams(beta, mu, L, R0), se)


def ma_coefficients(model: VarModel, n: int) -> np.ndarray:
    """``A_0 = I`` and ``A_h = sum_l Phi_l A_{h-l}`` for ``h < n``; shape ``(n, d, d)``."""
    d = model.dim
    A = np.zeros((n, d, d))
    A[0] = np.eye(d)
    for h in range(1, n):
        for l in range(1, min(h, model.order) + 1):
            A[h] += model.lags[l - 1] @ A[h - l]
    return A


@dataclass(frozen=True)
class SpilloverReport:
    """Indices in percent; ``fevd`` holds the row-normalised shares."""

    TSI: float
    DSI_to: np.ndarray
    DSI_from: np.ndarray
    NSI: np.ndarray
    fevd: np.ndarray
    horizon: int


def generalized_fevd(model: VarModel, n: int, denominator: str = "standard") -> np.ndarray:
    """Unnormalised generalised FEVD ``theta[i, j]`` at horizon ``n``.

    ``denominator="printed"`` squares the summed own forecast-error variance,
    an alternative reading kept for comparison only.
    """
    if n < 1:
        raise DomainError("horizon must be at least 1")
    if model.spectral_radius() >= 1.0:
        raise DomainError("VAR is not stable")
    S = model.sigma
    A = ma_coefficients(model, n)
    num = np.einsum("hij,jk->hik", A, S) ** 2  # (e_i' A_h S e_j)^2
    num = num.sum(axis=0) / np.diag(S)[None, :]
    own = np.einsum("hij,jk,hik->i", A, S, A)  # sum_h e_i' A_h S A_h' e_i
    if denominator == "standard":
        den = own
    elif denominator == "printed":
        den = own**2
    else:
        raise DomainError(f"unknown denominator {denominator!r}")
    return num / den[:, None]


def spillover(model: VarModel, n: int = 10, denominator: str = "standard") -> SpilloverReport:
    theta = generalized_fevd(model, n, denominator)
    share = theta / theta.sum(axis=1, keepdims=True)
    d = share.shape[0]
    off = share - np.diag(np.diag(share))
    from_ = 100.0 * off.sum(axis=1) / d
    to = 100.0 * off.sum(axis=0) / d
    return SpilloverReport(100.0 * off.sum() / d, to, from_, to - from_, share, n)


def ema(series, s: int) -> np.ndarray:
    """Exponential moving average seeded at the first observation."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise DataError("series is empty")
    keep, new = (s - 1.0) / (s + 1.0), 2.0 / (s + 1.0)
    out = np.empty_like(x)
    out[0] = x[0]
    for t in range(1, x.shape[0]):
        out[t] = keep * out[t - 1] + new * x[t]
    return out


class Macd(NamedTuple):
    ema_fast: np.ndarray
    ema_slow: np.ndarray
    macd: np.ndarray
    signal: np.ndarray


def compute_macd(series, span_n: int = 9, fast: int = 12, slow: int = 26) -> Macd:
    fast_ema = ema(series, fast)
    slow_ema = ema(series, slow)
    line = fast_ema - slow_ema
    return Macd(fast_ema, slow_ema, line, ema(line, span_n))
