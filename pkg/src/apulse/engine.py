"""The active level set estimation loop, classification rules, F1 and repeat aggregation."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .acquisition import AcqKind, AcquisitionSpec, GridPosterior, acquisition_values, select_next
from .gp import FactorizationError, GPConfig, GPState, fit_hyperparameters
from .kernels import KernelSpec
from .problem import Direction, Label, Problem, hard_labels
from .transfer import DiffGP, PriorFunction, TransferMode, _aplse_weights, build_prior_from_source

log = logging.getLogger(__name__)

__all__ = [
    "Label",
    "RunResult",
    "RepeatSummary",
    "classify_with_confidence",
    "hard_classify",
    "f1_score",
    "grid_posterior",
    "run_lse",
    "prepare_prior",
    "run_repeats",
    "iterations_to_threshold",
    "fitting_errors",
]

# independent rng streams per run
STREAM_NOISE, STREAM_TIES, STREAM_PRIOR, STREAM_FIT, STREAM_ACQ = 1, 2, 3, 4, 5


def _stream(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, *extra])


def classify_with_confidence(mu, sigma, h: float, beta: float = 3.0, direction=Direction.SUPER):
    """Three-way label from the confidence band mu +- beta sigma.

    Works elementwise on arrays; returns ``Label`` for scalars.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    above = mu - beta * sigma > h
    below = mu + beta * sigma < h
    if Direction.parse(direction) is Direction.SUB:
        above, below = below, above
    out = np.where(above, Label.IN, np.where(below, Label.OUT, Label.UNCLASSIFIED)).astype(np.int8)
    return Label(int(out)) if out.ndim == 0 else out


def hard_classify(mu, h: float, direction=Direction.SUPER):
    out = hard_labels(mu, h, direction)
    return Label(int(out)) if out.ndim == 0 else out


def f1_score(pred, truth) -> float:
    """F1 of the IN class; UNCLASSIFIED predictions count as OUT."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    p = pred == Label.IN
    q = truth == Label.IN
    tp = np.sum(p & q)
    fp = np.sum(p & ~q)
    fn = np.sum(~p & q)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def grid_posterior(mode: TransferMode, state: GPState, u_p, grid: np.ndarray, need_V: bool = False,
                   prior_grid: Optional[np.ndarray] = None, prior_train: Optional[np.ndarray] = None) -> GridPosterior:
    """Mode posterior mean and the shared GP variance on a grid.

    ``prior_grid``/``prior_train`` are precomputed prior values on the grid
    and at the training inputs; they avoid re-evaluating expensive priors.
    """
    mode = TransferMode.parse(mode)
    uses_prior = u_p is not None and mode in (TransferMode.VANILLA, TransferMode.APLSE)
    if not uses_prior:
        base = np.zeros(len(grid))
    else:
        base = prior_grid if prior_grid is not None else u_p(grid)
    if state.t == 0:
        return GridPosterior(grid, base, state.prior_variance(len(grid)), np.zeros((0, len(grid))), state.spec)
    if uses_prior:
        up_train = prior_train if prior_train is not None else u_p(state.X)
    Kq = state.cross(grid)
    if mode is TransferMode.APLSE:
        w = _aplse_weights(state, up_train)
    elif mode is TransferMode.VANILLA:
        w = state.solve(state.Y - up_train)
    else:
        w = state.solve(state.Y)
    V = solve_triangular(state.chol, Kq.T, lower=True, check_finite=False)
    var = np.clip(state.spec.variance - np.einsum("ij,ij->j", V, V), 0.0, state.spec.variance)
    return GridPosterior(grid, base + Kq @ w, var, V if need_V else np.zeros((0, 0)), state.spec)


def fitting_errors(state: GPState, u_p) -> tuple:
    """Squared training errors of (adaptive mean, vanilla mean, prior)."""
    up = u_p(state.X) if u_p is not None else np.zeros(state.t)
    r = state.Y - up
    K = state.cross(state.X)
    a1 = state.solve(r)
    mu_bar = up + K @ a1
    mu_tilde = up + K @ (a1 + state.solve(r - K @ a1))
    Y = state.Y
    return (float(np.sum((mu_tilde - Y) ** 2)), float(np.sum((mu_bar - Y) ** 2)), float(np.sum((up - Y) ** 2)))


@dataclass
class RunResult:
    selected_points: np.ndarray
    selected_indices: list
    observations: np.ndarray
    f1_curve: np.ndarray
    final_labels: np.ndarray
    seed: int
    mode: TransferMode
    wall_times: list
    specs: list = field(default_factory=list)
    theorem_checks: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.f1_curve)

    def iterations_to(self, target: float = 0.8) -> Optional[int]:
        return iterations_to_threshold(self.f1_curve, target)

    def to_csv(self, path) -> None:
        """Per-evaluation trace: iteration, x0..x{d-1}, y, f1, wall_ms."""
        d = self.selected_points.shape[1] if self.selected_points.size else 0
        lines = [",".join(["iteration"] + [f"x{i}" for i in range(d)] + ["y", "f1", "wall_ms"])]
        for i in range(len(self.observations)):
            f1 = self.f1_curve[i] if i < len(self.f1_curve) else float("nan")
            row = [str(i + 1)] + [repr(float(v)) for v in self.selected_points[i]]
            row += [repr(float(self.observations[i])), repr(float(f1)), f"{1e3 * self.wall_times[i]:.3f}"]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    def summary(self, target: float = 0.8) -> dict:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "iterations_to_threshold": self.iterations_to(target),
            "final_f1": float(self.f1_curve[-1]) if len(self.f1_curve) else None,
        }

    def to_json(self, path, target: float = 0.8) -> None:
        Path(path).write_text(json.dumps(self.summary(target), indent=2) + "\n")


def iterations_to_threshold(curve, target: float = 0.8) -> Optional[int]:
    """Number of evaluations at which F1 first reaches ``target``; None if never."""
    hits = np.flatnonzero(np.asarray(curve) >= target)
    return int(hits[0]) + 1 if len(hits) else None


def run_lse(
    problem: Problem,
    mode: "TransferMode | str",
    u_p: Optional[PriorFunction] = None,
    acq: Optional[AcquisitionSpec] = None,
    gp_config: Optional[GPConfig] = None,
    seed: int = 0,
    *,
    diffgp: Optional[DiffGP] = None,
    stop_at_f1: Optional[float] = None,
    theorem_check_every: Optional[int] = None,
    beta: float = 3.0,
    f1_rule: str = "hard",
) -> RunResult:
    """Run the active LSE loop for ``problem.budget`` evaluations.

    Each iteration refits the kernel (on a ``refit_every`` cadence), forms the
    mode's posterior mean, picks the acquisition argmax over the candidate
    grid and observes the noisy oracle. F1 of the hard classification on the
    evaluation grid is recorded after every evaluation.

    ``stop_at_f1`` ends the run once F1 reaches that value; the trace up to
    that point is identical to an unstopped run.
    """
    mode = TransferMode.parse(mode)
    acq = acq or AcquisitionSpec()
    cfg = gp_config or GPConfig()
    if mode in (TransferMode.VANILLA, TransferMode.APLSE) and u_p is None:
        raise ValueError(f"{mode.value} mode needs a prior function")
    if mode is TransferMode.DIFFGP and diffgp is None:
        raise ValueError("diffgp mode needs source data (a DiffGP model)")
    if mode is TransferMode.SCRATCH:
        u_p = None

    if cfg.input_range is None:
        cfg = GPConfig(**{**cfg.__dict__, "input_range": problem.input_range})
    noise_rng = _stream(seed, STREAM_NOISE)
    tie_rng = _stream(seed, STREAM_TIES)
    sign = problem.direction.sign
    d = problem.dim
    cand = problem.candidate_grid
    same_grid = cand is problem.eval_grid or (cand.shape == problem.eval_grid.shape
                                              and np.array_equal(cand, problem.eval_grid))
    need_V = acq.kind is AcqKind.RMILE

    X = np.zeros((0, d))
    Y = np.zeros(0)
    chosen: list = []
    f1s: list = []
    walls: list = []
    specs: list = []
    checks: list = []
    spec = cfg.default_spec()
    diff_specs = None
    labels = np.zeros(len(problem.eval_grid), dtype=np.int8)
    # the prior is fixed for the whole run: evaluate it once on the grids
    prior_eval = u_p(problem.eval_grid) if u_p is not None else None
    prior_cand = prior_eval if same_grid else (u_p(cand) if u_p is not None else None)
    prior_train = np.zeros(0)
    t0 = time.perf_counter()

    for t in range(problem.budget + 1):
        # step 1: hyperparameters
        due = t >= 2 and ((t - 2) % cfg.refit_every == 0)
        if mode is TransferMode.DIFFGP:
            if due or diff_specs is None:
                diff_specs = diffgp.fit_specs(X, Y)
            state = diffgp.union_state(X, Y, *diff_specs)
        else:
            if due:
                spec = fit_hyperparameters(
                    X, Y, prior_train if u_p is not None else None, cfg.family, cfg.fit_noise,
                    default=cfg.default_spec(), n_starts=cfg.n_starts,
                    seed=int(_stream(seed, STREAM_FIT, t).integers(2 ** 31)),
                    warm_start=spec, input_range=cfg.input_range, maxfev=cfg.maxfev)
            state = _make_state(X, Y, spec, d)
        specs.append(state.spec)

        # steps 2-3: posterior of the active mode
        post_eval = grid_posterior(mode, state, u_p, problem.eval_grid, need_V and same_grid,
                                   prior_eval, prior_train if u_p is not None else None)
        if t >= 1:
            if f1_rule == "hard":
                labels = hard_labels(post_eval.mu, problem.h, problem.direction)
            else:
                labels = classify_with_confidence(post_eval.mu, post_eval.sigma, problem.h, beta, problem.direction)
            f1s.append(f1_score(labels, problem.true_labels))
            walls.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            if theorem_check_every and u_p is not None and t % theorem_check_every == 0:
                checks.append(fitting_errors(state, u_p))
            if stop_at_f1 is not None and f1s[-1] >= stop_at_f1:
                break
        if t == problem.budget:
            break

        # step 4: acquisition argmax
        post = post_eval if same_grid else grid_posterior(mode, state, u_p, cand, need_V, prior_cand,
                                                          prior_train if u_p is not None else None)
        obs_scale = float(np.std(Y)) if t >= 2 and np.std(Y) > 0 else 1.0
        cand_idx = None
        if need_V and acq.max_candidates is not None and acq.max_candidates < len(cand):
            cand_idx = np.sort(_stream(seed, STREAM_ACQ, t).choice(len(cand), acq.max_candidates, replace=False))
        values = acquisition_values(acq, post, problem.h, noise_variance=state.spec.noise_variance,
                                    obs_scale=obs_scale, seed=int(_stream(seed, STREAM_ACQ).integers(2 ** 31)),
                                    sign=sign, candidates=cand_idx)
        k = select_next(cand if cand_idx is None else cand[cand_idx], values, chosen if cand_idx is None else (),
                        tie_rng, acq.allow_repeats or cand_idx is not None)
        j = int(k if cand_idx is None else cand_idx[k])

        # step 5-7: evaluate and append
        x_new = cand[j]
        f_val = float(np.asarray(problem.oracle(x_new[None, :])).reshape(-1)[0])
        if not np.isfinite(f_val):
            raise RuntimeError(f"oracle returned {f_val} at {x_new.tolist()} (iteration {t + 1}, seed {seed})")
        y_new = f_val + (noise_rng.normal(0.0, problem.noise_sd) if problem.noise_sd > 0 else 0.0)
        X = np.vstack([X, x_new])
        Y = np.append(Y, y_new)
        chosen.append(j)
        if u_p is not None:
            prior_train = np.append(prior_train, prior_cand[j])

    return RunResult(
        selected_points=X,
        selected_indices=chosen,
        observations=Y,
        f1_curve=np.asarray(f1s, dtype=float),
        final_labels=labels,
        seed=seed,
        mode=mode,
        wall_times=walls,
        specs=specs,
        theorem_checks=checks,
    )


def _make_state(X, Y, spec: KernelSpec, d: int) -> GPState:
    try:
        return GPState(X, Y, spec, dim=d)
    except FactorizationError:
        log.warning("factorization failed at t=%d; retrying with 10x jitter", len(Y))
        return GPState(X, Y, spec, jitter_scale=10.0, dim=d)


def prepare_prior(problem: Problem, mode: TransferMode, gp_config: GPConfig, seed: int,
                  prior: Optional[PriorFunction] = None, diffgp_source_cap: Optional[int] = None):
    """Per-seed prior (or Diff-GP model) from a fresh draw of the problem's source data."""
    mode = TransferMode.parse(mode)
    if mode is TransferMode.SCRATCH:
        return None, None
    if prior is not None and mode is not TransferMode.DIFFGP:
        return prior, None
    if problem.source_sampler is None:
        raise ValueError(f"{mode.value} mode needs a prior or a problem with source data")
    sX, sY = problem.source_sampler(_stream(seed, STREAM_PRIOR))
    cfg = gp_config if gp_config.input_range is not None else \
        GPConfig(**{**gp_config.__dict__, "input_range": problem.input_range})
    if mode is TransferMode.DIFFGP:
        return None, DiffGP(sX, sY, cfg, seed, diffgp_source_cap)
    return build_prior_from_source(sX, sY, cfg.family, seed, cfg), None


@dataclass
class RepeatSummary:
    mode: TransferMode
    seeds: list
    mean_curve: np.ndarray
    stderr_curve: np.ndarray
    iterations: list  # None where the target was never reached
    runs: list
    target: float = 0.8

    @property
    def reached(self) -> list:
        return [i for i in self.iterations if i is not None]

    def mean_iterations(self) -> Optional[float]:
        return float(np.mean(self.reached)) if len(self.reached) == len(self.iterations) else None

    def median_iterations(self) -> Optional[float]:
        """Median with unreached runs ranked above every reached one; None if that median is unreached."""
        vals = sorted(np.inf if i is None else i for i in self.iterations)
        med = float(np.median(vals)) if vals else np.inf
        return None if not np.isfinite(med) else med


def _run_one(args):
    problem, mode, acq, gp_config, seed, prior, kw = args
    u_p, model = prepare_prior(problem, mode, gp_config, seed, prior, kw.pop("diffgp_source_cap", None))
    return run_lse(problem, mode, u_p, acq, gp_config, seed, diffgp=model, **kw)


def aggregate_curves(curves: Sequence[np.ndarray]):
    """Elementwise mean and standard error; shorter (stopped) curves are padded with NaN."""
    n = max(len(c) for c in curves)
    M = np.full((len(curves), n), np.nan)
    for i, c in enumerate(curves):
        M[i, : len(c)] = c
    count = np.sum(~np.isnan(M), axis=0)
    mean = np.nanmean(M, axis=0)
    sd = np.array([np.nanstd(M[:, j], ddof=1) if count[j] > 1 else 0.0 for j in range(n)])
    return mean, sd / np.sqrt(np.maximum(count, 1))


def run_repeats(
    problem: Problem,
    mode: "TransferMode | str",
    acq: Optional[AcquisitionSpec] = None,
    gp_config: Optional[GPConfig] = None,
    seeds: Sequence[int] = (0,),
    *,
    target: float = 0.8,
    prior: Optional[PriorFunction] = None,
    workers: int = 1,
    **run_kw,
) -> RepeatSummary:
    """Run one seed per entry of ``seeds`` and aggregate the F1 curves."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    mode = TransferMode.parse(mode)
    acq = acq or AcquisitionSpec()
    gp_config = gp_config or GPConfig()
    jobs = [(problem, mode, acq, gp_config, s, prior, dict(run_kw)) for s in seeds]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                runs = list(ex.map(_run_one, jobs))
        else:
            runs = [_run_one(j) for j in jobs]
    except Exception as exc:
        raise RuntimeError(f"{mode.value} repeat failed: {exc}") from exc
    mean, se = aggregate_curves([r.f1_curve for r in runs])
    return RepeatSummary(mode, seeds, mean, se, [r.iterations_to(target) for r in runs], runs, target)
