"""Experiment configuration: a strict TOML schema with defaults and round-tripping."""

from __future__ import annotations

import dataclasses
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .acquisition import AcqKind, AcquisitionSpec
from .bench import TASKS, FunctionName
from .gp import GPConfig
from .kernels import Family
from .problem import Direction
from .transfer import TransferMode

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "AcquisitionConfig",
    "GPOptions",
    "ExperimentConfig",
    "parse_config",
    "config_from_dict",
    "dump_config",
]

DESK_REPEATS = 10
PAPER_REPEATS = 30


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass
class ProblemConfig:
    """Either a synthetic benchmark (``name``) or a CSV dataset (``dataset``)."""

    name: Optional[str] = None
    kappa: Optional[float] = None  # Table 1 target kappa when unset
    source_kappa: float = 0.0
    budget: Optional[int] = None
    resolution: Optional[list] = None
    dataset: Optional[str] = None
    threshold: Optional[float] = None
    direction: Optional[str] = None
    source_dataset: Optional[str] = None
    target_fraction: float = 1.0


@dataclass
class AcquisitionConfig:
    kind: str = "straddle"
    epsilon: float = 0.05
    delta: float = 0.5
    lam: float = 0.01
    mc_samples: int = 64
    relative_epsilon: bool = True
    max_candidates: Optional[int] = None

    def to_spec(self) -> AcquisitionSpec:
        return AcquisitionSpec(AcqKind.parse(self.kind), self.epsilon, self.delta, self.lam, self.mc_samples,
                               self.relative_epsilon, True, self.max_candidates)


@dataclass
class GPOptions:
    family: str = "matern52"
    noise_sd: float = 0.1  # model noise and synthetic observation noise
    fit_noise: bool = False
    refit_every: int = 1
    n_starts: int = 8
    maxfev: int = 300

    def to_config(self) -> GPConfig:
        return GPConfig(family=Family.parse(self.family), noise_sd=self.noise_sd, fit_noise=self.fit_noise,
                        refit_every=self.refit_every, n_starts=self.n_starts, maxfev=self.maxfev)


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    modes: list = field(default_factory=lambda: ["scratch", "vanilla", "aplse"])
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    gp: GPOptions = field(default_factory=GPOptions)
    repeats: int = DESK_REPEATS
    seed: int = 0
    out: Optional[str] = None
    f1_target: float = 0.8
    f1_rule: str = "hard"
    beta: float = 3.0
    workers: Optional[int] = None
    base_dir: Optional[str] = field(default=None, compare=False, repr=False, metadata={"internal": True})

    @property
    def seeds(self) -> list:
        return [self.seed + i for i in range(self.repeats)]

    def transfer_modes(self) -> list:
        return [TransferMode.parse(m) for m in self.modes]

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return path

    def validate(self) -> "ExperimentConfig":
        p = self.problem
        if (p.name is None) == (p.dataset is None):
            raise ConfigError("problem: give exactly one of 'name' or 'dataset'")
        if p.name is not None:
            try:
                FunctionName.parse(p.name)
            except ValueError as exc:
                raise ConfigError(f"problem.name: {exc}") from None
            if p.kappa is None:
                p.kappa = TASKS[FunctionName.parse(p.name)].target_kappa
        else:
            for key in ("threshold", "direction", "budget"):
                if getattr(p, key) is None:
                    raise ConfigError(f"problem.{key}: required for dataset problems")
            try:
                Direction.parse(p.direction)
            except ValueError as exc:
                raise ConfigError(f"problem.direction: {exc}") from None
        if p.budget is not None and p.budget < 1:
            raise ConfigError("problem.budget: must be >= 1")
        if p.resolution is not None and (not p.resolution or any(
                isinstance(r, bool) or not isinstance(r, int) or r < 2 for r in p.resolution)):
            raise ConfigError("problem.resolution: every entry must be an integer >= 2")
        if not 0 < p.target_fraction <= 1:
            raise ConfigError("problem.target_fraction: must lie in (0, 1]")
        if self.repeats < 1:
            raise ConfigError("repeats: must be >= 1")
        if not 0 < self.f1_target <= 1:
            raise ConfigError("f1_target: must lie in (0, 1]")
        if self.f1_rule not in ("hard", "confidence"):
            raise ConfigError("f1_rule: must be 'hard' or 'confidence'")
        if not self.beta > 0:
            raise ConfigError("beta: must be > 0")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if not self.modes:
            raise ConfigError("modes: at least one mode is required")
        for i, m in enumerate(self.modes):
            try:
                TransferMode.parse(m)
            except ValueError as exc:
                raise ConfigError(f"modes[{i}]: {exc}") from None
        try:
            self.acquisition.to_spec()
        except ValueError as exc:
            raise ConfigError(f"acquisition: {exc}") from None
        try:
            self.gp.to_config()
        except ValueError as exc:
            raise ConfigError(f"gp: {exc}") from None
        if self.gp.refit_every < 1 or self.gp.n_starts < 1 or self.gp.maxfev < 1:
            raise ConfigError("gp: refit_every, n_starts and maxfev must be >= 1")
        if self.gp.noise_sd < 0:
            raise ConfigError("gp.noise_sd: must be >= 0")
        return self


def _check_type(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _check_type(value, args[0], path)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {type(value).__name__}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {type(value).__name__}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {type(value).__name__}")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return list(value)
    raise TypeError(f"unsupported schema type {tp}")


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a table")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        key = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, key)
        else:
            kwargs[name] = _check_type(value, tp, key)
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir=None) -> ExperimentConfig:
    """Strict parse of a config mapping; ``problem = "name"`` is shorthand for a synthetic task."""
    data = dict(data)
    if isinstance(data.get("problem"), str):
        data["problem"] = {"name": data["problem"]}
    cfg = _build(ExperimentConfig, data, "")
    if base_dir is not None:
        cfg.base_dir = str(base_dir)
    return cfg.validate()


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if f.metadata.get("internal"):
            continue
        v = getattr(obj, f.name)
        if v is None:
            continue  # TOML has no null; absent means default
        out[f.name] = _to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    """Effective config as TOML; parsing it back gives an equal config."""
    return tomli_w.dumps(_to_dict(cfg))
