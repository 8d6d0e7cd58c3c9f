"""Level-set acquisition functions and argmax selection over a finite grid."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import ndtr

__all__ = [
    "AcqKind",
    "AcquisitionSpec",
    "GridPosterior",
    "straddle_value",
    "c2lse_value",
    "rmile_value",
    "rmile_values",
    "rmile_expectation",
    "acquisition_values",
    "select_next",
]


class AcqKind(str, enum.Enum):
    STRADDLE = "straddle"
    C2LSE = "c2lse"
    RMILE = "rmile"

    @classmethod
    def parse(cls, value) -> "AcqKind":
        if isinstance(value, AcqKind):
            return value
        key = str(value).strip().lower()
        for k in cls:
            if k.value == key or (k is cls.STRADDLE and key == "str"):
                return k
        raise ValueError(f"unknown acquisition {value!r}")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Acquisition choice and its parameters.

    For C2LSE ``epsilon`` is multiplied by the observation scale (std of the
    observations so far, 1 before two observations) when
    ``relative_epsilon`` is set. RMILE uses ``epsilon`` as an absolute margin.
    """

    kind: AcqKind = AcqKind.STRADDLE
    epsilon: float = 0.05
    delta: float = 0.5
    lam: float = 0.01
    mc_samples: int = 64
    relative_epsilon: bool = True
    allow_repeats: bool = True
    max_candidates: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AcqKind.parse(self.kind))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


def straddle_value(mu, sigma, h):
    """1.96 sigma - |mu - h|."""
    return 1.96 * np.asarray(sigma) - np.abs(np.asarray(mu) - h)


def c2lse_value(mu, sigma, h, epsilon):
    """sigma / max(epsilon, |mu - h|)."""
    return np.asarray(sigma) / np.maximum(epsilon, np.abs(np.asarray(mu) - h))


@dataclass
class GridPosterior:
    """Posterior summaries on a grid, enough for one-point lookahead.

    ``V`` holds L^{-1} k(X_t, grid) so that the posterior covariance between
    grid points i and j is k(g_i, g_j) - V[:, i] . V[:, j].
    """

    grid: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    V: np.ndarray
    spec: object  # KernelSpec

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var)

    def cov_with(self, j: int) -> np.ndarray:
        from .kernels import kernel_matrix

        prior = kernel_matrix(self.spec, self.grid, self.grid[j])[:, 0]
        if self.V.shape[0] == 0:
            return prior
        return prior - self.V.T @ self.V[:, j]


def _prob_above(mu, sigma, level):
    """P(N(mu, sigma^2) > level), with the sigma = 0 limit handled exactly."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (mu - level) / sigma
    z = np.where(sigma > 0, z, np.where(mu > level, np.inf, -np.inf))
    return ndtr(z)


def _count_eps(post: GridPosterior, h: float, spec: AcquisitionSpec, sign: float) -> int:
    return int(np.sum(_prob_above(sign * post.mu, post.sigma, sign * h - spec.epsilon) > spec.delta))


def rmile_expectation(post: GridPosterior, j: int, h: float, spec: AcquisitionSpec, noise_variance: float,
                      draws: np.ndarray, sign: float = 1.0) -> float:
    """Mean over ``draws`` (standard normals) of |I+| after observing y+ at grid point ``j``."""
    pred_var = post.var[j] + noise_variance
    if pred_var < 1e-12:
        draws = np.zeros(1)
        pred_var = max(pred_var, 0.0)
    c = post.cov_with(j)
    # mean shift per draw is c / pred_sd * z; variance shrink is draw-independent
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(pred_var > 0, c / np.sqrt(pred_var), 0.0)
        var_plus = np.clip(post.var - np.where(pred_var > 0, c * c / pred_var, 0.0), 0.0, None)
    sd_plus = np.sqrt(var_plus)
    mu_plus = post.mu[None, :] + draws[:, None] * gain[None, :]
    probs = _prob_above(sign * mu_plus, sd_plus[None, :], sign * h)
    return float(np.mean(np.sum(probs > spec.delta, axis=1)))


def rmile_values(post: GridPosterior, candidates: Iterable[int], h: float, spec: AcquisitionSpec,
                 noise_variance: float, seed: int = 0, sign: float = 1.0) -> np.ndarray:
    """RMILE acquisition for each candidate index into ``post.grid``.

    ``sign = -1`` targets the sublevel set (the problem is mirrored).
    """
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal(spec.mc_samples)
    base = _count_eps(post, h, spec, sign)
    sigma = post.sigma
    out = []
    for j in candidates:
        e = rmile_expectation(post, j, h, spec, noise_variance, draws, sign)
        out.append(max(e - base, spec.lam * sigma[j]))
    return np.asarray(out, dtype=float)


def rmile_value(post: GridPosterior, j: int, h: float, spec: AcquisitionSpec, noise_variance: float,
                seed: int = 0, sign: float = 1.0) -> float:
    return float(rmile_values(post, [j], h, spec, noise_variance, seed, sign)[0])


def acquisition_values(spec: AcquisitionSpec, post: GridPosterior, h: float, *, noise_variance: float = 0.0,
                       obs_scale: float = 1.0, seed: int = 0, sign: float = 1.0,
                       candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """Acquisition values over ``candidates`` (indices into the grid; all by default)."""
    if candidates is None:
        candidates = np.arange(len(post.mu))
    mu, sigma = post.mu[candidates], post.sigma[candidates]
    if spec.kind is AcqKind.STRADDLE:
        return straddle_value(mu, sigma, h)
    if spec.kind is AcqKind.C2LSE:
        eps = spec.epsilon * (obs_scale if spec.relative_epsilon else 1.0)
        return c2lse_value(mu, sigma, h, eps)
    return rmile_values(post, candidates, h, spec, noise_variance, seed, sign)


def select_next(candidates, values, already_chosen=(), rng: Optional[np.random.Generator] = None,
                allow_repeats: bool = True) -> int:
    """Index of the maximal value, ties broken uniformly at random."""
    values = np.asarray(values, dtype=float)
    if len(values) != len(candidates) or len(values) == 0:
        raise ValueError("candidates and values must be non-empty and of equal length")
    v = np.where(np.isfinite(values), values, -np.inf)
    if not allow_repeats:
        chosen = np.fromiter(already_chosen, dtype=int)
        if len(chosen):
            v[chosen] = -np.inf
    if not np.any(np.isfinite(v)):
        raise ValueError("no finite acquisition value to maximise")
    ties = np.flatnonzero(v == v.max())
    if len(ties) == 1:
        return int(ties[0])
    if rng is None:
        rng = np.random.default_rng()
    return int(ties[rng.integers(len(ties))])
