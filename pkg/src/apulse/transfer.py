"""Prior functions and the transfer-learning posteriors built on them.

Modes:

* ``SCRATCH``  zero-mean GP posterior, prior ignored.
* ``VANILLA``  prior used directly as the GP mean.
* ``APLSE``    prior plus a smoothed adjustment toward the observed residuals,
  then smoothed once more (adaptive prior).
* ``DIFFGP``   source data shifted by a learned difference model and merged
  with the target observations.

Posterior variance is the zero-mean GP variance in the first three modes.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .gp import (
    GPConfig,
    GPState,
    _eval_prior,
    _out,
    _query,
    fit_hyperparameters,
    posterior_mean_with_prior,
    posterior_zero_mean,
)
from .kernels import Family, KernelSpec

log = logging.getLogger(__name__)

__all__ = [
    "PriorFunction",
    "ZeroPrior",
    "ClosedFormPrior",
    "GPMeanPrior",
    "TransferMode",
    "build_prior_from_source",
    "adjustment_u_dt",
    "adaptive_posterior_mean",
    "twice_smoothed_mean",
    "posterior_mean_for_mode",
    "mode_posterior",
    "DiffGP",
    "diffgp_posterior_mean",
]


class TransferMode(str, enum.Enum):
    SCRATCH = "scratch"
    VANILLA = "vanilla"
    APLSE = "aplse"
    DIFFGP = "diffgp"

    @classmethod
    def parse(cls, value) -> "TransferMode":
        if isinstance(value, TransferMode):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown transfer mode {value!r}")


class PriorFunction:
    """Deterministic map from points (m, d) to prior values (m,)."""

    kind = "abstract"

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self._eval(X), dtype=float).reshape(len(X))

    def _eval(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroPrior(PriorFunction):
    kind = "zero"

    def _eval(self, X):
        return np.zeros(len(X))


class ClosedFormPrior(PriorFunction):
    """Wraps a vectorised callable, e.g. a benchmark function at a given kappa."""

    kind = "closed_form"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "", kappa: Optional[float] = None):
        self.fn = fn
        self.name = name
        self.kappa = kappa

    def _eval(self, X):
        return self.fn(X)

    def __repr__(self):
        return f"ClosedFormPrior({self.name!r}, kappa={self.kappa})"


class GPMeanPrior(PriorFunction):
    """Posterior mean of a frozen zero-mean GP."""

    kind = "gp_mean"

    def __init__(self, state: GPState):
        self.state = state

    def _eval(self, X):
        mu, _ = posterior_zero_mean(self.state, X)
        return mu


def build_prior_from_source(
    source_X,
    source_Y,
    family: "Family | str" = Family.MATERN52,
    seed: int = 0,
    config: Optional[GPConfig] = None,
) -> GPMeanPrior:
    """Fit a zero-mean GP on source data and freeze its posterior mean as a prior."""
    source_X = np.atleast_2d(np.asarray(source_X, dtype=float))
    source_Y = np.asarray(source_Y, dtype=float).reshape(-1)
    if len(source_Y) < 2:
        raise ValueError("need at least two source points")
    if config is None:
        config = GPConfig(family=family)
    default = config.default_spec().with_params(family=Family.parse(family))
    try:
        spec = fit_hyperparameters(
            source_X, source_Y, None, family, config.fit_noise,
            default=default, n_starts=config.n_starts, seed=seed,
            input_range=config.input_range, maxfev=config.maxfev,
        )
    except Exception as exc:  # noqa: BLE001 - fitting is best effort here
        log.warning("source GP fit failed (%s); using default kernel", exc)
        spec = default
    return GPMeanPrior(GPState(source_X, source_Y, spec))


def _residual(state: GPState, u_p) -> np.ndarray:
    return state.Y - _eval_prior(u_p, state.X)


def adjustment_u_dt(state: GPState, u_p, x):
    """Smoothed residual correction alpha_t(x) . (Y_t - u_p(X_t)); zero without data."""
    Xq, single = _query(x, state.dim)
    if state.t == 0:
        return _out(np.zeros(len(Xq)), single)
    return _out(state.smooth(Xq, _residual(state, u_p)), single)


def _aplse_weights(state: GPState, u_p) -> np.ndarray:
    """Solve vector w with mu_tilde(x) = u_p(x) + k_t(x) . w.

    ``u_p`` may be the prior callable or its values at the training inputs.
    """
    r1 = _residual(state, u_p)
    a1 = state.solve(r1)
    u_dt_train = state.cross(state.X) @ a1
    a2 = state.solve(r1 - u_dt_train)
    return a1 + a2


def adaptive_posterior_mean(state: GPState, u_p, x):
    """Posterior mean under the adjusted prior u_p + u_dt.

    Evaluated literally: u_p(x) + u_dt(x) + alpha_t(x) . (Y - u_p(X) - u_dt(X)).
    Falls back to u_p(x) when there is no data.
    """
    Xq, single = _query(x, state.dim)
    base = _eval_prior(u_p, Xq)
    if state.t == 0:
        return _out(base, single)
    r1 = _residual(state, u_p)
    u_dt_q = state.smooth(Xq, r1)
    u_dt_train = state.smooth(state.X, r1)
    return _out(base + u_dt_q + state.smooth(Xq, r1 - u_dt_train), single)


def twice_smoothed_mean(state: GPState, u_p, x):
    """mu_bar(x) + alpha_t(x) . (Y - mu_bar(X)); algebraically equal to the adaptive mean."""
    Xq, single = _query(x, state.dim)
    base = _eval_prior(u_p, Xq)
    if state.t == 0:
        return _out(base, single)
    r1 = _residual(state, u_p)
    mu_bar_q = base + state.smooth(Xq, r1)
    mu_bar_train = state.Y - r1 + state.smooth(state.X, r1)
    return _out(mu_bar_q + state.smooth(Xq, state.Y - mu_bar_train), single)


@dataclass
class DiffGP:
    """Difference-model baseline.

    Source GP fitted once; each update fits a GP to the target residuals
    against the source mean, shifts the source observations by that
    difference, and conditions a zero-mean GP on source plus target.
    """

    source_X: np.ndarray
    source_Y: np.ndarray
    config: GPConfig = field(default_factory=GPConfig)
    seed: int = 0
    source_cap: Optional[int] = None

    def __post_init__(self):
        self.source_X = np.atleast_2d(np.asarray(self.source_X, dtype=float))
        self.source_Y = np.asarray(self.source_Y, dtype=float).reshape(-1)
        if len(self.source_Y) == 0:
            raise ValueError("DiffGP needs source data")
        if self.source_cap is not None and self.source_cap < len(self.source_Y):
            self.source_X = self.source_X[: self.source_cap]
            self.source_Y = self.source_Y[: self.source_cap]
        self.source_mean = build_prior_from_source(
            self.source_X, self.source_Y, self.config.family, self.seed, self.config) \
            if len(self.source_Y) >= 2 else GPMeanPrior(
                GPState(self.source_X, self.source_Y, self.config.default_spec()))

    def _fit(self, X, Y, warm: Optional[KernelSpec] = None) -> KernelSpec:
        c = self.config
        return fit_hyperparameters(
            X, Y, None, c.family, c.fit_noise, default=c.default_spec(),
            n_starts=c.n_starts, seed=self.seed, warm_start=warm,
            input_range=c.input_range, maxfev=c.maxfev)

    def _shifted_source(self, target_X, target_Y, diff_spec: Optional[KernelSpec]):
        if len(target_Y) == 0:
            return self.source_Y, diff_spec
        diff_obs = target_Y - self.source_mean(target_X)
        if diff_spec is None:
            diff_spec = self._fit(target_X, diff_obs)
        diff = GPMeanPrior(GPState(target_X, diff_obs, diff_spec))
        return self.source_Y + diff(self.source_X), diff_spec

    def _target(self, target_X, target_Y):
        d = self.source_X.shape[1]
        return (np.asarray(target_X, dtype=float).reshape(-1, d),
                np.asarray(target_Y, dtype=float).reshape(-1))

    def fit_specs(self, target_X, target_Y) -> tuple:
        """ML kernels for the difference GP and the union GP."""
        target_X, target_Y = self._target(target_X, target_Y)
        shifted, diff_spec = self._shifted_source(target_X, target_Y, None)
        union_spec = self._fit(np.vstack([self.source_X, target_X]), np.concatenate([shifted, target_Y]))
        return diff_spec, union_spec

    def union_state(self, target_X, target_Y, diff_spec: Optional[KernelSpec] = None,
                    union_spec: Optional[KernelSpec] = None) -> GPState:
        """GP conditioned on shifted source data plus the target observations.

        Kernel specs are fitted by ML unless given explicitly.
        """
        target_X, target_Y = self._target(target_X, target_Y)
        shifted, diff_spec = self._shifted_source(target_X, target_Y, diff_spec)
        X = np.vstack([self.source_X, target_X])
        Y = np.concatenate([shifted, target_Y])
        if union_spec is None:
            union_spec = self._fit(X, Y)
        return GPState(X, Y, union_spec)


def diffgp_posterior_mean(source_X, source_Y, state: GPState, x, config: Optional[GPConfig] = None,
                          seed: int = 0, specs: Optional[tuple] = None):
    """(mean, variance) of the Diff-GP posterior at ``x``.

    ``specs`` = (diff_spec, union_spec) pins the kernels instead of fitting them.
    """
    if config is None:
        config = GPConfig(family=state.spec.family, noise_sd=float(np.sqrt(state.spec.noise_variance)))
    model = DiffGP(source_X, source_Y, config, seed)
    diff_spec, union_spec = specs if specs is not None else (None, None)
    union = model.union_state(state.X, state.Y, diff_spec, union_spec)
    return posterior_zero_mean(union, x)


def mode_posterior(mode: TransferMode, state: GPState, u_p, Xq: np.ndarray):
    """Mean and variance on a batch of points, sharing one cross-covariance block.

    For DIFFGP pass the union state as ``state`` (prior ignored).
    """
    mode = TransferMode.parse(mode)
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if mode in (TransferMode.SCRATCH, TransferMode.DIFFGP):
        u_p = None
    base = _eval_prior(u_p, Xq)
    if state.t == 0:
        return base, state.prior_variance(len(Xq))
    Kq = state.cross(Xq)
    if mode is TransferMode.APLSE:
        w = state.cached((mode, id(u_p)), lambda: _aplse_weights(state, u_p))
    else:
        w = state.cached((mode, id(u_p)), lambda: state.solve(_residual(state, u_p)))
    return base + Kq @ w, state.variance(Xq, Kq)


def posterior_mean_for_mode(mode: TransferMode, state: GPState, u_p, x, diffgp: Optional[DiffGP] = None):
    """Dispatch to the posterior mean of the requested transfer mode."""
    mode = TransferMode.parse(mode)
    if mode is TransferMode.SCRATCH:
        return posterior_zero_mean(state, x)[0]
    if mode is TransferMode.VANILLA:
        return posterior_mean_with_prior(state, u_p, x)
    if mode is TransferMode.APLSE:
        return adaptive_posterior_mean(state, u_p, x)
    if diffgp is None:
        raise ValueError("DIFFGP mode requires source data (pass a DiffGP model)")
    union = diffgp.union_state(state.X, state.Y)
    return posterior_zero_mean(union, x)[0]
