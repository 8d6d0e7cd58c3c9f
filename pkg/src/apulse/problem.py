"""Problem definition and label conventions shared by the engine and benchmarks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["Direction", "Label", "Problem", "hard_labels"]


class Direction(str, enum.Enum):
    SUPER = "super"  # target set is f > h
    SUB = "sub"  # target set is f < h

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        key = str(value).strip().lower()
        aliases = {"super": cls.SUPER, ">": cls.SUPER, "above": cls.SUPER,
                   "sub": cls.SUB, "<": cls.SUB, "below": cls.SUB}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown direction {value!r}") from None

    @property
    def sign(self) -> float:
        """+1 for SUPER, -1 for SUB: sign * f > sign * h selects the target set."""
        return 1.0 if self is Direction.SUPER else -1.0


class Label(enum.IntEnum):
    OUT = 0
    IN = 1
    UNCLASSIFIED = -1


def hard_labels(values, h: float, direction: Direction) -> np.ndarray:
    """Strict-inequality membership of the target set; ties count as OUT."""
    values = np.asarray(values, dtype=float)
    inside = values > h if Direction.parse(direction) is Direction.SUPER else values < h
    return np.where(inside, Label.IN, Label.OUT).astype(np.int8)


@dataclass
class Problem:
    """A level set estimation task over finite grids.

    ``oracle`` is the noiseless target, vectorised over (m, d) arrays; noise
    with standard deviation ``noise_sd`` is added by the engine.
    ``source_sampler(rng)`` returns (X, Y) source data used to build the
    prior, when the task has one.
    """

    oracle: Callable[[np.ndarray], np.ndarray]
    h: float
    direction: Direction
    candidate_grid: np.ndarray
    eval_grid: np.ndarray
    budget: int
    noise_sd: float = 0.1
    true_labels: Optional[np.ndarray] = None
    name: str = "problem"
    bounds: Optional[np.ndarray] = None
    source_sampler: Optional[Callable[[np.random.Generator], tuple]] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.direction = Direction.parse(self.direction)
        self.candidate_grid = np.atleast_2d(np.asarray(self.candidate_grid, dtype=float))
        self.eval_grid = np.atleast_2d(np.asarray(self.eval_grid, dtype=float))
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.true_labels is None:
            self.true_labels = hard_labels(self.oracle(self.eval_grid), self.h, self.direction)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int8)
        if len(self.true_labels) != len(self.eval_grid):
            raise ValueError("eval_grid and true_labels differ in length")
        if self.candidate_grid.shape[1] != self.eval_grid.shape[1]:
            raise ValueError("candidate and evaluation grids differ in dimension")

    @property
    def dim(self) -> int:
        return self.eval_grid.shape[1]

    @property
    def input_range(self) -> float:
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            return float(np.max(b[:, 1] - b[:, 0]))
        return float(np.max(np.ptp(self.eval_grid, axis=0))) or 1.0
