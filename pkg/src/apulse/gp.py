"""Exact GP regression: posterior formulas, evidence and ML hyperparameter fitting.

All query functions accept either a single point (shape ``(d,)``), returning
scalars, or a batch ``(m, d)``, returning arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .kernels import Family, KernelSpec, kernel_from_distances, kernel_matrix

log = logging.getLogger(__name__)

__all__ = [
    "FactorizationError",
    "GPState",
    "GPConfig",
    "HyperBounds",
    "posterior_zero_mean",
    "posterior_variance",
    "posterior_mean_with_prior",
    "smoother_weights",
    "log_marginal_likelihood",
    "fit_hyperparameters",
    "default_bounds",
]

_LOG_2PI = np.log(2.0 * np.pi)


class FactorizationError(RuntimeError):
    """Cholesky of K + sigma^2 I failed even with jitter."""


def _query(x, dim: int):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ValueError(f"query dimension {arr.shape[1]} != training dimension {dim}")
    return arr, single


def _out(v, single: bool):
    return float(v[0]) if single else v


def _eval_prior(u_p, X: np.ndarray) -> np.ndarray:
    """Prior values at X; ``u_p`` may be None, a callable or precomputed values."""
    if u_p is None:
        return np.zeros(len(X))
    if isinstance(u_p, np.ndarray):
        if len(u_p) != len(X):
            raise ValueError("precomputed prior values do not match the points")
        return u_p.astype(float, copy=False)
    return np.asarray(u_p(X), dtype=float).reshape(len(X))


class GPState:
    """Training data, kernel and the cached Cholesky factor of K_t + sigma^2 I.

    Treated as immutable after construction; every query is read-only.
    """

    def __init__(self, X, Y, spec: KernelSpec, jitter_scale: float = 1.0, dim: Optional[int] = None):
        X = np.asarray(X, dtype=float)
        if X.size == 0:
            if dim is None:
                raise ValueError("dim is required for an empty GPState")
            X = X.reshape(0, dim)
        elif X.ndim == 1:
            X = X[:, None] if dim in (None, 1) else X.reshape(-1, dim)
        Y = np.asarray(Y, dtype=float).reshape(-1)
        if len(X) != len(Y):
            raise ValueError(f"|X|={len(X)} but |Y|={len(Y)}")
        self.X = X
        self.Y = Y
        self.spec = spec
        self.dim = X.shape[1]
        # retries escalate jitter even when the noise term alone should suffice
        self.jitter = spec.jitter if jitter_scale == 1.0 else 1e-8 * spec.variance * jitter_scale
        self.chol = None
        if len(X):
            K = kernel_matrix(spec, X)
            K[np.diag_indices_from(K)] += spec.noise_variance + self.jitter
            try:
                self.chol = cholesky(K, lower=True, check_finite=False)
            except LinAlgError as exc:
                raise FactorizationError(
                    f"K_t + sigma^2 I not positive definite (t={len(X)}, "
                    f"noise={spec.noise_variance:.3g}, jitter={self.jitter:.3g})") from exc
        self._alpha_cache: dict = {}

    @property
    def t(self) -> int:
        return len(self.Y)

    def solve(self, v) -> np.ndarray:
        """(K_t + sigma^2 I)^{-1} v."""
        return cho_solve((self.chol, True), np.asarray(v, dtype=float), check_finite=False)

    def alpha(self, key, residual: np.ndarray) -> np.ndarray:
        """Cached solve against a named residual vector."""
        return self.cached(key, lambda: self.solve(residual))

    def cached(self, key, compute: Callable[[], np.ndarray]) -> np.ndarray:
        if key not in self._alpha_cache:
            self._alpha_cache[key] = compute()
        return self._alpha_cache[key]

    def cross(self, Xq: np.ndarray) -> np.ndarray:
        """k(Xq, X_t), shape (m, t)."""
        return kernel_matrix(self.spec, Xq, self.X)

    def prior_variance(self, m: int) -> np.ndarray:
        return np.full(m, self.spec.variance)

    def smooth(self, Xq: np.ndarray, residual: np.ndarray, key: Optional[str] = None) -> np.ndarray:
        """alpha_t(Xq) . residual for a batch of queries."""
        if self.t == 0:
            return np.zeros(len(Xq))
        a = self.alpha(key, residual) if key is not None else self.solve(residual)
        return self.cross(Xq) @ a

    def variance(self, Xq: np.ndarray, Kq: Optional[np.ndarray] = None) -> np.ndarray:
        if self.t == 0:
            return self.prior_variance(len(Xq))
        if Kq is None:
            Kq = self.cross(Xq)
        V = solve_triangular(self.chol, Kq.T, lower=True, check_finite=False)
        var = self.spec.variance - np.einsum("ij,ij->j", V, V)
        return np.clip(var, 0.0, self.spec.variance)


def posterior_zero_mean(state: GPState, x):
    """Zero-mean-prior posterior mean and variance at ``x``."""
    Xq, single = _query(x, state.dim)
    if state.t == 0:
        return _out(np.zeros(len(Xq)), single), _out(state.prior_variance(len(Xq)), single)
    Kq = state.cross(Xq)
    mu = Kq @ state.alpha("zero", state.Y)
    var = state.variance(Xq, Kq)
    return _out(mu, single), _out(var, single)


def posterior_variance(state: GPState, x):
    Xq, single = _query(x, state.dim)
    return _out(state.variance(Xq), single)


def posterior_mean_with_prior(state: GPState, u_p: Optional[Callable], x):
    """Posterior mean with ``u_p`` as the GP prior mean (vanilla transfer)."""
    Xq, single = _query(x, state.dim)
    base = _eval_prior(u_p, Xq)
    if state.t == 0:
        return _out(base, single)
    resid = state.Y - _eval_prior(u_p, state.X)
    return _out(base + state.cross(Xq) @ state.solve(resid), single)


def smoother_weights(state: GPState, x) -> np.ndarray:
    """Row(s) k_t(x)^T (K_t + sigma^2 I)^{-1}; shape (t,) or (m, t)."""
    Xq, single = _query(x, state.dim)
    if state.t == 0:
        W = np.zeros((len(Xq), 0))
    else:
        W = state.solve(state.cross(Xq).T).T
    return W[0] if single else W


def log_marginal_likelihood(X, Y, residual_prior: Optional[Callable], spec: KernelSpec) -> float:
    """Log evidence of the residuals Y - residual_prior(X) under GP(0, k)."""
    state = GPState(X, Y, spec)
    if state.t == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    r = state.Y - _eval_prior(residual_prior, state.X)
    a = state.solve(r)
    return float(-0.5 * r @ a - np.sum(np.log(np.diag(state.chol))) - 0.5 * state.t * _LOG_2PI)


@dataclass(frozen=True)
class HyperBounds:
    """Box bounds on natural-log hyperparameters."""

    log_variance: tuple
    log_lengthscale: tuple
    log_noise: tuple = (np.log(1e-6), np.log(1.0))


def default_bounds(X: np.ndarray, residual: np.ndarray, input_range: Optional[float] = None) -> HyperBounds:
    """Lengthscale in [1e-2, 1e2] x input range; variance within e^{+-6} of the residual variance."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if input_range is None:
        input_range = float(np.max(np.ptp(X, axis=0))) if len(X) > 1 else 1.0
    if not input_range > 0:
        input_range = 1.0
    s2 = float(np.var(residual)) if len(residual) > 1 else 0.0
    center = np.log(s2) if s2 > 1e-12 else 0.0
    return HyperBounds(
        log_variance=(center - 6.0, center + 6.0),
        log_lengthscale=(np.log(1e-2 * input_range), np.log(1e2 * input_range)),
    )


@dataclass(frozen=True)
class GPConfig:
    """Surrogate options shared by every run.

    ``noise_sd`` is the observation noise standard deviation; the kernel's
    noise variance is its square unless ``fit_noise`` is set.
    """

    family: Family = Family.MATERN52
    noise_sd: float = 0.1
    fit_noise: bool = False
    refit_every: int = 1
    n_starts: int = 8
    maxfev: int = 300
    input_range: Optional[float] = None
    default_variance: float = 1.0
    default_lengthscale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    def default_spec(self) -> KernelSpec:
        return KernelSpec(self.family, self.default_variance, self.default_lengthscale, self.noise_sd ** 2)


def _neg_lml_factory(D: np.ndarray, r: np.ndarray, family: Family, noise: float, fit_noise: bool):
    t = len(r)
    diag = np.diag_indices(t)

    def neg_lml(theta):
        var = np.exp(theta[0])
        spec = KernelSpec(family, var, np.exp(theta[1]), np.exp(theta[2]) if fit_noise else noise)
        K = kernel_from_distances(spec, D)
        K[diag] += spec.noise_variance + spec.jitter
        try:
            L = cholesky(K, lower=True, check_finite=False)
        except (LinAlgError, ValueError):
            return 1e25
        a = cho_solve((L, True), r, check_finite=False)
        val = 0.5 * r @ a + np.sum(np.log(np.diag(L))) + 0.5 * t * _LOG_2PI
        return val if np.isfinite(val) else 1e25

    return neg_lml


def fit_hyperparameters(
    X,
    Y,
    residual_prior: Optional[Callable] = None,
    family: "Family | str" = Family.MATERN52,
    fit_noise: bool = False,
    bounds: Optional[HyperBounds] = None,
    *,
    default: Optional[KernelSpec] = None,
    noise_variance: float = 0.01,
    n_starts: int = 8,
    seed: int = 0,
    warm_start: Optional[KernelSpec] = None,
    input_range: Optional[float] = None,
    maxfev: int = 300,
) -> KernelSpec:
    """Maximise the log evidence with seeded multistart Nelder-Mead in log space.

    Returns ``default`` untouched when fewer than two observations are given, or
    when no start improves on it (a warning is logged in that case).
    """
    family = Family.parse(family)
    if default is None:
        default = KernelSpec(family, 1.0, 1.0, noise_variance)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if len(Y) < 2:
        return default
    X = X.reshape(len(Y), -1)
    r = Y - _eval_prior(residual_prior, X)
    if bounds is None:
        bounds = default_bounds(X, r, input_range)
    box = [bounds.log_variance, bounds.log_lengthscale] + ([bounds.log_noise] if fit_noise else [])
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    objective = _neg_lml_factory(cdist(X, X), r, family, default.noise_variance, fit_noise)

    def to_theta(s: KernelSpec):
        th = [np.log(s.variance), np.log(s.lengthscale)]
        if fit_noise:
            th.append(np.log(max(s.noise_variance, 1e-12)))
        return np.array(th)

    default_theta = to_theta(default)
    best_theta, best_val = default_theta, objective(default_theta)
    default_val = best_val

    rng = np.random.default_rng(seed)
    starts = [np.clip(default_theta, lo, hi)]
    if warm_start is not None:
        starts.append(np.clip(to_theta(warm_start), lo, hi))
    while len(starts) < n_starts:
        starts.append(rng.uniform(lo, hi))

    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"xatol": 1e-3, "fatol": 1e-6, "maxfev": maxfev})
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun

    if not best_val < default_val:
        log.warning("hyperparameter fit did not improve on defaults (t=%d); keeping defaults", len(Y))
        return default
    return KernelSpec(
        family,
        float(np.exp(best_theta[0])),
        float(np.exp(best_theta[1])),
        float(np.exp(best_theta[2])) if fit_noise else default.noise_variance,
    )
