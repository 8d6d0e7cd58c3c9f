"""Randomised self-check suites for the posterior algebra.

Each suite draws random instances, compares the implementation against an
inequality or an independent brute-force oracle, and returns a
``SuiteReport`` with the pass count, the worst margin and up to a few
serialised failing instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .gp import GPState, posterior_mean_with_prior, posterior_zero_mean
from .kernels import Family, KernelSpec, kernel_matrix
from .transfer import ClosedFormPrior, adaptive_posterior_mean, twice_smoothed_mean

__all__ = [
    "SuiteReport",
    "RandomSmoothFunction",
    "theorem1_selfcheck",
    "identity_selfcheck",
    "gp_oracle_selfcheck",
    "kernel_psd_selfcheck",
    "run_all",
]

MAX_FAILURES_KEPT = 5


@dataclass
class SuiteReport:
    name: str
    n_instances: int
    n_pass: int
    worst_margin: float  # >= 0 iff every instance passed
    elapsed_s: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_pass == self.n_instances

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.n_pass}/{self.n_instances} "
                f"worst margin {self.worst_margin:.3e} ({self.elapsed_s:.2f}s)")


@dataclass(frozen=True)
class RandomSmoothFunction:
    """Random cosine-feature sum, an approximate draw from a smooth GP."""

    W: np.ndarray
    b: np.ndarray
    a: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, d: int = 2, features: int = 50,
             lengthscale: float = 0.3, scale: float = 1.0) -> "RandomSmoothFunction":
        return cls(rng.normal(0.0, 1.0 / lengthscale, size=(features, d)),
                   rng.uniform(0.0, 2 * np.pi, size=features),
                   scale * np.sqrt(2.0 / features) * rng.normal(size=features))

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.cos(X @ self.W.T + self.b) @ self.a

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist(), "a": self.a.tolist()}


def _random_spec(rng: np.random.Generator, family: Family) -> KernelSpec:
    return KernelSpec(
        family,
        variance=float(np.exp(rng.uniform(-1.5, 1.5))),
        lengthscale=float(np.exp(rng.uniform(np.log(0.05), np.log(1.0)))),
        noise_variance=float(np.exp(rng.uniform(np.log(1e-3), np.log(0.5)))),
    )


def _instance(rng, family, t_range=(2, 30), d=2):
    t = int(rng.integers(t_range[0], t_range[1] + 1))
    X = rng.uniform(size=(t, d))
    target = RandomSmoothFunction.draw(rng, d, lengthscale=float(rng.uniform(0.1, 0.6)))
    Y = target(X) + float(rng.uniform(0.0, 0.3)) * rng.normal(size=t)
    prior = RandomSmoothFunction.draw(rng, d, lengthscale=float(rng.uniform(0.1, 0.6)))
    return X, Y, _random_spec(rng, family), prior


def _serialise(X, Y, spec, prior=None, **extra) -> dict:
    out = {"X": X.tolist(), "Y": Y.tolist(), "family": spec.family.value, "variance": spec.variance,
           "lengthscale": spec.lengthscale, "noise_variance": spec.noise_variance}
    if prior is not None:
        out["prior"] = prior.to_dict()
    out.update(extra)
    return out


def _sign_flipped_adaptive_mean(state: GPState, u_p, X) -> np.ndarray:
    """Adaptive mean with the adjustment subtracted instead of added (mutation target)."""
    r = state.Y - u_p(state.X)
    return u_p(X) - state.smooth(X, r) + state.smooth(X, r + state.smooth(state.X, r))


def theorem1_selfcheck(n_instances: int = 1000, seed: int = 0, family="matern52",
                       slack: float = 1e-8, flip_u_dt_sign: bool = False) -> SuiteReport:
    """Check sum(mu_tilde - y)^2 <= sum(mu_bar - y)^2 <= sum(u_p - y)^2 on random instances.

    Each inequality a <= b is accepted when a <= b (1 + slack). The margin of
    an instance is the smaller of b (1 + slack) - a over both links, divided
    by the prior's error so instances of different scale compare.
    ``flip_u_dt_sign`` swaps in a deliberately wrong adaptive mean.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    family = Family.parse(family)
    rng = np.random.default_rng([seed, 101])
    start = time.perf_counter()
    n_pass, worst, failures = 0, np.inf, []
    for i in range(n_instances):
        X, Y, spec, prior_fn = _instance(rng, family)
        u_p = ClosedFormPrior(prior_fn)
        state = GPState(X, Y, spec)
        tilde = (_sign_flipped_adaptive_mean if flip_u_dt_sign else adaptive_posterior_mean)(state, u_p, X)
        e_tilde = float(np.sum((tilde - Y) ** 2))
        e_bar = float(np.sum((posterior_mean_with_prior(state, u_p, X) - Y) ** 2))
        e_up = float(np.sum((u_p(X) - Y) ** 2))
        margin = min(e_bar * (1 + slack) - e_tilde, e_up * (1 + slack) - e_bar) / max(e_up, 1e-300)
        worst = min(worst, margin)
        if margin >= 0:
            n_pass += 1
        elif len(failures) < MAX_FAILURES_KEPT:
            failures.append(_serialise(X, Y, spec, prior_fn, instance=i, errors=[e_tilde, e_bar, e_up]))
    return SuiteReport(f"fitting-error chain ({family.value})", n_instances, n_pass, float(worst),
                       time.perf_counter() - start, failures)


def identity_selfcheck(n_instances: int = 500, seed: int = 0, family="matern52", atol: float = 1e-10) -> SuiteReport:
    """Literal adaptive mean vs the twice-smoothed form at training and fresh points."""
    family = Family.parse(family)
    rng = np.random.default_rng([seed, 102])
    start = time.perf_counter()
    n_pass, worst, failures = 0, np.inf, []
    for i in range(n_instances):
        X, Y, spec, prior_fn = _instance(rng, family)
        u_p = ClosedFormPrior(prior_fn)
        state = GPState(X, Y, spec)
        Xq = np.vstack([X, rng.uniform(size=(20, X.shape[1]))])
        gap = float(np.max(np.abs(adaptive_posterior_mean(state, u_p, Xq) - twice_smoothed_mean(state, u_p, Xq))))
        margin = atol - gap
        worst = min(worst, margin)
        if margin >= 0:
            n_pass += 1
        elif len(failures) < MAX_FAILURES_KEPT:
            failures.append(_serialise(X, Y, spec, prior_fn, instance=i, gap=gap))
    return SuiteReport(f"adaptive-mean identity ({family.value})", n_instances, n_pass, float(worst),
                       time.perf_counter() - start, failures)


def _explicit_posterior(X, Y, spec, Xq):
    A = kernel_matrix(spec, X) + spec.noise_variance * np.eye(len(X))
    Ainv = np.linalg.inv(A)
    Kq = kernel_matrix(spec, Xq, X)
    mu = Kq @ Ainv @ Y
    var = spec.variance - np.einsum("ij,jk,ik->i", Kq, Ainv, Kq)
    return mu, np.maximum(var, 0.0)


def gp_oracle_selfcheck(n_instances: int = 200, seed: int = 0, family="matern52", rtol: float = 1e-8,
                        max_points: int = 50) -> SuiteReport:
    """Cholesky posterior vs an explicit matrix-inverse evaluation, n <= ``max_points``.

    Agreement is relative to the output scale: max|Y| for the mean and the
    kernel variance for the variance.
    """
    family = Family.parse(family)
    rng = np.random.default_rng([seed, 103])
    start = time.perf_counter()
    n_pass, worst, failures = 0, np.inf, []
    for i in range(n_instances):
        X, Y, spec, _ = _instance(rng, family, t_range=(1, max_points))
        Xq = np.vstack([X, rng.uniform(size=(15, X.shape[1]))])
        mu, var = posterior_zero_mean(GPState(X, Y, spec), Xq)
        mu0, var0 = _explicit_posterior(X, Y, spec, Xq)
        rel = max(float(np.max(np.abs(mu - mu0))) / max(float(np.max(np.abs(Y))), 1e-300),
                  float(np.max(np.abs(var - var0))) / spec.variance)
        margin = rtol - rel
        worst = min(worst, margin)
        if margin >= 0:
            n_pass += 1
        elif len(failures) < MAX_FAILURES_KEPT:
            failures.append(_serialise(X, Y, spec, instance=i, rel_error=rel))
    return SuiteReport(f"GP vs explicit inverse ({family.value})", n_instances, n_pass, float(worst),
                       time.perf_counter() - start, failures)


def kernel_psd_selfcheck(n_instances: int = 200, seed: int = 0, family="matern52") -> SuiteReport:
    """Gram matrices are symmetric with eigenvalues >= -n * var * 1e-12."""
    family = Family.parse(family)
    rng = np.random.default_rng([seed, 104])
    start = time.perf_counter()
    n_pass, worst, failures = 0, np.inf, []
    for i in range(n_instances):
        n = int(rng.integers(1, 60))
        d = int(rng.integers(1, 4))
        X = rng.uniform(size=(n, d))
        if n > 3:
            X[-1] = X[0]  # duplicated rows are the usual edge case
        spec = _random_spec(rng, family)
        K = kernel_matrix(spec, X)
        tol = n * spec.variance * 1e-12
        lam = float(np.linalg.eigvalsh(K).min())
        margin = (lam + tol) / spec.variance if np.array_equal(K, K.T) else -np.inf
        worst = min(worst, margin)
        if margin >= 0:
            n_pass += 1
        elif len(failures) < MAX_FAILURES_KEPT:
            failures.append(_serialise(X, np.zeros(n), spec, instance=i, min_eigenvalue=lam))
    return SuiteReport(f"kernel PSD ({family.value})", n_instances, n_pass, float(worst),
                       time.perf_counter() - start, failures)


def run_all(seed: int = 0, families=tuple(Family), flip_u_dt_sign: bool = False,
            n_theorem: int = 1000, n_identity: int = 500, n_oracle: int = 200, n_psd: int = 200) -> list:
    """Every suite under every kernel family."""
    reports = []
    for fam in families:
        reports.append(theorem1_selfcheck(n_theorem, seed, fam, flip_u_dt_sign=flip_u_dt_sign))
        reports.append(identity_selfcheck(n_identity, seed, fam))
        reports.append(gp_oracle_selfcheck(n_oracle, seed, fam))
        reports.append(kernel_psd_selfcheck(n_psd, seed, fam))
    return reports
