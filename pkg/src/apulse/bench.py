"""Synthetic benchmarks, grids, source sampling and CSV grid datasets."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .problem import Direction, Problem

__all__ = [
    "FunctionName",
    "SyntheticFunction",
    "TaskSettings",
    "TASKS",
    "eval_synthetic",
    "make_problem",
    "SyntheticSource",
    "DatasetSource",
    "GPMeanOracle",
    "make_uniform_grid",
    "sample_source_points",
    "level_set_similarity",
    "GridDataset",
    "load_grid_dataset",
    "save_grid_dataset",
    "problem_from_datasets",
]

GRID_CAP = 10_000_000


class FunctionName(str, enum.Enum):
    BIRD = "bird"
    MC3D = "mc3d"
    MISHRA03 = "mishra03"

    @classmethod
    def parse(cls, value) -> "FunctionName":
        if isinstance(value, FunctionName):
            return value
        key = str(value).strip().lower()
        for n in cls:
            if n.value == key:
                return n
        raise ValueError(f"unknown synthetic function {value!r}")


@dataclass(frozen=True)
class TaskSettings:
    bounds: tuple
    h: float
    direction: Direction
    resolution: tuple
    budget: int
    target_kappa: float


TASKS = {
    FunctionName.BIRD: TaskSettings(((-6.0, 6.0), (-6.0, 6.0)), 4.0, Direction.SUB, (100, 100), 150, 0.4),
    FunctionName.MC3D: TaskSettings(((0.0, 6.0),) * 3, 1.6, Direction.SUPER, (20, 20, 20), 400, 0.3),
    FunctionName.MISHRA03: TaskSettings(((-5.0, 5.0), (-5.0, 5.0)), 0.7, Direction.SUB, (100, 100), 250, 0.4),
}


def _bird(X, k):
    x1, x2 = X[:, 0], X[:, 1]
    return (np.sin(x1) * np.exp((1.0 + k - np.cos(x2)) ** 2)
            + np.cos(x2) * np.exp((1.0 - np.sin(x1)) ** 2)
            + (x1 - x2) ** 2)


def _mc3d(X, k):
    s = np.sin(X + k) ** 2
    return np.exp(s[:, 0] * s[:, 1] * s[:, 2])


def _mishra03(X, k):
    x1, x2 = X[:, 0], X[:, 1]
    return np.sqrt(np.abs(np.cos(np.sqrt(x1 ** 2 + x2 ** 2) + k))) + 0.01 * (x1 + x2)


_FUNCS = {FunctionName.BIRD: _bird, FunctionName.MC3D: _mc3d, FunctionName.MISHRA03: _mishra03}


@dataclass(frozen=True)
class SyntheticFunction:
    """Benchmark function with its shift parameter kappa; callable on (m, d) arrays."""

    name: FunctionName
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "name", FunctionName.parse(self.name))

    @property
    def dim(self) -> int:
        return len(TASKS[self.name].bounds)

    @property
    def bounds(self) -> np.ndarray:
        return np.array(TASKS[self.name].bounds, dtype=float)

    def __call__(self, X) -> np.ndarray:
        return eval_synthetic(self, X)


def eval_synthetic(f: SyntheticFunction, x):
    """Evaluate at one point (returns float) or a batch (returns array).

    Inputs outside the function's box raise ``ValueError``.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != f.dim:
        raise ValueError(f"{f.name.value} expects dimension {f.dim}, got {arr.shape[1]}")
    b = f.bounds
    tol = 1e-9 * (b[:, 1] - b[:, 0])
    if np.any(arr < b[:, 0] - tol) or np.any(arr > b[:, 1] + tol) or not np.all(np.isfinite(arr)):
        raise ValueError(f"input outside the {f.name.value} domain {b.tolist()}")
    out = _FUNCS[f.name](arr, f.kappa)
    return float(out[0]) if single else out


def make_uniform_grid(bounds: Sequence, resolution: Sequence[int], cap: int = GRID_CAP) -> np.ndarray:
    """Cartesian grid including endpoints; row-major with the last dimension fastest."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    resolution = [int(r) for r in np.broadcast_to(resolution, (len(bounds),))]
    if any(r < 2 for r in resolution):
        raise ValueError("resolution must be >= 2 in every dimension")
    n = math.prod(resolution)
    if n > cap:
        raise ValueError(f"grid of {n} points exceeds the cap of {cap}")
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(bounds, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_source_points(f: SyntheticFunction, count: int, noise_sd: float, seed=None,
                         rng: Optional[np.random.Generator] = None):
    """Uniform random points in the box with noisy function values."""
    if count < 2:
        raise ValueError("count must be >= 2")
    if rng is None:
        rng = np.random.default_rng(seed)
    b = f.bounds
    X = rng.uniform(b[:, 0], b[:, 1], size=(count, f.dim))
    Y = eval_synthetic(f, X)
    if noise_sd > 0:
        Y = Y + rng.normal(0.0, noise_sd, size=count)
    return X, Y


def level_set_similarity(labels_a, labels_b) -> float:
    """Fraction of positions with identical labels."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(a == b))


@dataclass(frozen=True)
class SyntheticSource:
    """Draws prior-construction data from a benchmark function."""

    function: SyntheticFunction
    count: int
    noise_sd: float

    def __call__(self, rng: np.random.Generator):
        return sample_source_points(self.function, self.count, self.noise_sd, rng=rng)


@dataclass(frozen=True)
class DatasetSource:
    """Draws ``count`` random rows of a source dataset."""

    dataset: "GridDataset"
    count: int

    def __call__(self, rng: np.random.Generator):
        pick = rng.choice(self.dataset.n, size=min(self.count, self.dataset.n), replace=False)
        return self.dataset.points[pick], self.dataset.values[pick]


class GPMeanOracle:
    """Noiseless target defined as the posterior mean of a fitted GP."""

    def __init__(self, state):
        self.state = state

    def __call__(self, X):
        from .gp import posterior_zero_mean

        return posterior_zero_mean(self.state, np.atleast_2d(np.asarray(X, dtype=float)))[0]


def make_problem(name, target_kappa: Optional[float] = None, *, noise_sd: float = 0.1,
                 source_kappa: float = 0.0, source_count: Optional[int] = None,
                 budget: Optional[int] = None, resolution: Optional[Sequence[int]] = None) -> Problem:
    """Benchmark task with the standard threshold, grid, budget and target kappa.

    Source data for the prior come from the same function at ``source_kappa``
    with ``source_count`` points (the budget by default).
    """
    name = FunctionName.parse(name)
    task = TASKS[name]
    kappa = task.target_kappa if target_kappa is None else float(target_kappa)
    target = SyntheticFunction(name, kappa)
    source = SyntheticFunction(name, source_kappa)
    grid = make_uniform_grid(task.bounds, resolution or task.resolution)
    budget = task.budget if budget is None else int(budget)
    count = budget if source_count is None else int(source_count)
    return Problem(
        oracle=target,
        h=task.h,
        direction=task.direction,
        candidate_grid=grid,
        eval_grid=grid,
        budget=budget,
        noise_sd=noise_sd,
        name=name.value,
        bounds=np.array(task.bounds, dtype=float),
        source_sampler=SyntheticSource(source, count, noise_sd),
        meta={"kappa": kappa, "source_kappa": source_kappa, "source_count": count},
    )


@dataclass
class GridDataset:
    points: np.ndarray
    values: np.ndarray
    threshold: Optional[float] = None
    direction: Optional[Direction] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) < 1:
            raise ValueError("no data rows")
        if len(self.points) != len(self.values):
            raise ValueError("points and values differ in length")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.values))):
            raise ValueError("non-finite entries in dataset")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def summary(self) -> dict:
        return {"n": self.n, "d": self.d,
                "value_min": float(self.values.min()), "value_max": float(self.values.max())}


def load_grid_dataset(path) -> GridDataset:
    """Read ``x0,...,x{d-1},value`` CSV rows; errors name the offending line."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        d = len(header) - 1
        if d < 1 or header[-1] != "value" or header[:-1] != [f"x{i}" for i in range(d)]:
            raise ValueError(f"{path}:1: header must be x0,...,x{{d-1}},value; got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in {row}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return GridDataset(arr[:, :d], arr[:, d])


def save_grid_dataset(ds: GridDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(ds.d)] + ["value"])
        for p, v in zip(ds.points, ds.values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def problem_from_datasets(target: GridDataset, h: float, direction, budget: int, *,
                          source: Optional[GridDataset] = None, target_fraction: float = 1.0,
                          noise_sd: float = 0.0, seed: int = 0, config=None, name: str = "dataset") -> Problem:
    """Real-world style task: the target oracle is a GP mean fitted on a random subset of the target grid.

    The candidate and evaluation grids are the target dataset's points. With
    a ``source`` dataset, each run's prior is built from ``budget`` random
    source rows.
    """
    from .gp import GPConfig, GPState, fit_hyperparameters

    config = config or GPConfig()
    rng = np.random.default_rng(seed)
    m = max(2, int(round(target_fraction * target.n)))
    idx = np.sort(rng.choice(target.n, size=min(m, target.n), replace=False))
    spec = fit_hyperparameters(target.points[idx], target.values[idx], None, config.family,
                               config.fit_noise, default=config.default_spec(),
                               n_starts=config.n_starts, seed=seed)
    oracle = GPMeanOracle(GPState(target.points[idx], target.values[idx], spec))
    sampler = DatasetSource(source, budget) if source is not None else None
    lo, hi = target.points.min(axis=0), target.points.max(axis=0)
    return Problem(oracle=oracle, h=h, direction=direction, candidate_grid=target.points,
                   eval_grid=target.points, budget=budget, noise_sd=noise_sd, name=name,
                   bounds=np.stack([lo, hi], axis=1), source_sampler=sampler)
