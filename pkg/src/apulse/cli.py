"""Command-line entry point: ``apulse run | sweep-kappa | selfcheck | ingest-check``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bench import (
    FunctionName,
    SyntheticFunction,
    TASKS,
    level_set_similarity,
    load_grid_dataset,
    make_problem,
    make_uniform_grid,
    problem_from_datasets,
)
from .config import PAPER_REPEATS, ConfigError, ExperimentConfig, dump_config, parse_config
from .engine import run_repeats
from .problem import Direction, Problem, hard_labels
from .selfcheck import run_all

log = logging.getLogger("apulse")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
DEFAULT_OUT = "apulse_out"


class OutputTracker:
    """Remembers written files so a failed command can flag them as partial."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def mark_partial(self) -> None:
        for p in self.written:
            if p.exists():
                p.replace(p.with_name(p.name + ".partial"))


def _fmt(v: float) -> str:
    return repr(float(v))


def build_problem(cfg: ExperimentConfig, kappa: Optional[float] = None, paper_scale: bool = False) -> Problem:
    p = cfg.problem
    budget = None if paper_scale else p.budget
    if p.name is not None:
        return make_problem(p.name, p.kappa if kappa is None else kappa, noise_sd=cfg.gp.noise_sd,
                            source_kappa=p.source_kappa, budget=budget, resolution=p.resolution)
    target = load_grid_dataset(cfg.resolve_path(p.dataset))
    source = load_grid_dataset(cfg.resolve_path(p.source_dataset)) if p.source_dataset else None
    return problem_from_datasets(target, p.threshold, Direction.parse(p.direction), p.budget, source=source,
                                 target_fraction=p.target_fraction, noise_sd=cfg.gp.noise_sd, seed=cfg.seed,
                                 config=cfg.gp.to_config(), name=Path(p.dataset).stem)


def _repeat_mode(cfg: ExperimentConfig, problem: Problem, mode, workers: int, stop_at_target: bool = False):
    return run_repeats(problem, mode, cfg.acquisition.to_spec(), cfg.gp.to_config(), cfg.seeds,
                       target=cfg.f1_target, workers=workers, f1_rule=cfg.f1_rule, beta=cfg.beta,
                       stop_at_f1=cfg.f1_target if stop_at_target else None)


def write_curve_csv(path: Path, mean, stderr) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "mean_f1", "stderr"])
        for i, (m, s) in enumerate(zip(mean, stderr), start=1):
            w.writerow([i, _fmt(m), _fmt(s)])


def read_curve_csv(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


def plot_curves(curve_files: dict, path: Path, title: str) -> None:
    """Mean F1 with a one-stderr band per mode, drawn from the curve CSVs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "apulse"
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, f in curve_files.items():
        it, mean, se = read_curve_csv(f)
        ax.plot(it, mean, label=mode)
        ax.fill_between(it, mean - se, mean + se, alpha=0.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean F1")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _iters(v) -> str:
    return "NA" if v is None else _fmt(v)


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int, paper_scale: bool = False,
            traces: bool = False) -> int:
    tracker = OutputTracker(out)
    try:
        problem = build_problem(cfg, paper_scale=paper_scale)
        (tracker.path("config.toml")).write_text(dump_config(cfg))
        summaries, curve_files = {}, {}
        for mode in cfg.transfer_modes():
            t0 = time.perf_counter()
            rep = _repeat_mode(cfg, problem, mode, workers)
            f = tracker.path(f"curve_{mode.value}.csv")
            write_curve_csv(f, rep.mean_curve, rep.stderr_curve)
            curve_files[mode.value] = f
            summaries[mode.value] = rep
            if traces:
                for r in rep.runs:
                    r.to_csv(tracker.path(f"traces/{mode.value}_seed{r.seed}.csv"))
            log.info("%s: %d repeats in %.1fs, median iterations to %.2f: %s", mode.value, cfg.repeats,
                     time.perf_counter() - t0, cfg.f1_target, rep.median_iterations())

        n = max(len(r.mean_curve) for r in summaries.values())
        with tracker.path("comparison.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration"] + [f"{m}_{c}" for m in summaries for c in ("mean_f1", "stderr")])
            for i in range(n):
                row = [i + 1]
                for rep in summaries.values():
                    ok = i < len(rep.mean_curve)
                    row += [_fmt(rep.mean_curve[i]) if ok else "", _fmt(rep.stderr_curve[i]) if ok else ""]
                w.writerow(row)

        summary = {
            "problem": problem.name,
            "kappa": problem.meta.get("kappa"),
            "budget": problem.budget,
            "seeds": cfg.seeds,
            "f1_target": cfg.f1_target,
            "modes": {
                m: {
                    "iterations_to_target": rep.iterations,
                    "mean_iterations": rep.mean_iterations(),
                    "median_iterations": rep.median_iterations(),
                    "final_mean_f1": float(rep.mean_curve[-1]),
                }
                for m, rep in summaries.items()
            },
        }
        tracker.path("summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        plot_curves(curve_files, tracker.path("f1_curves.svg"),
                    f"{problem.name} ({cfg.acquisition.kind}, {cfg.repeats} repeats)")
    except Exception:
        tracker.mark_partial()
        raise
    for m, rep in summaries.items():
        print(f"{m}: median iterations to F1 {cfg.f1_target}: {_iters(rep.median_iterations())}, "
              f"final mean F1 {rep.mean_curve[-1]:.3f}")
    print(f"wrote {len(tracker.written)} files to {out}")
    return EXIT_OK


def similarity_for(cfg: ExperimentConfig, kappa: float) -> float:
    """Hard-label agreement of the noiseless source and target functions on the task grid."""
    name = FunctionName.parse(cfg.problem.name)
    task = TASKS[name]
    grid = make_uniform_grid(task.bounds, cfg.problem.resolution or task.resolution)
    a = hard_labels(SyntheticFunction(name, cfg.problem.source_kappa)(grid), task.h, task.direction)
    b = hard_labels(SyntheticFunction(name, kappa)(grid), task.h, task.direction)
    return level_set_similarity(a, b)


def cmd_sweep_kappa(cfg: ExperimentConfig, kappas: list, out: Path, workers: int,
                    paper_scale: bool = False) -> int:
    if cfg.problem.name is None:
        raise ConfigError("sweep-kappa: needs a synthetic problem (problem.name)")
    tracker = OutputTracker(out)
    try:
        tracker.path("config.toml").write_text(dump_config(cfg))
        sims, table = [], {m.value: {"mean": [], "median": []} for m in cfg.transfer_modes()}
        per_seed = {}
        for k in kappas:
            sims.append(similarity_for(cfg, k))
            problem = build_problem(cfg, kappa=k, paper_scale=paper_scale)
            for mode in cfg.transfer_modes():
                rep = _repeat_mode(cfg, problem, mode, workers, stop_at_target=True)
                table[mode.value]["mean"].append(rep.mean_iterations())
                table[mode.value]["median"].append(rep.median_iterations())
                per_seed[f"{mode.value}@{k}"] = rep.iterations
                log.info("kappa %g %s: %s", k, mode.value, rep.iterations)
        with tracker.path("sweep_kappa.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row"] + [_fmt(k) for k in kappas])
            w.writerow(["similarity_pct"] + [f"{100 * s:.2f}" for s in sims])
            for m, stats in table.items():
                for stat in ("mean", "median"):
                    w.writerow([f"{m}_{stat}"] + [_iters(v) for v in stats[stat]])
        tracker.path("sweep_kappa.json").write_text(json.dumps(
            {"kappas": kappas, "similarity": sims, "iterations": per_seed, "table": table},
            indent=2) + "\n")
    except Exception:
        tracker.mark_partial()
        raise
    print("kappa      " + " ".join(f"{k:>8g}" for k in kappas))
    print("similarity " + " ".join(f"{100 * s:>7.1f}%" for s in sims))
    for m, stats in table.items():
        print(f"{m:<10} " + " ".join(f"{_iters(v):>8}" if v is None else f"{v:>8g}" for v in stats["median"]))
    return EXIT_OK


def cmd_selfcheck(seed: int, flip_u_dt_sign: bool = False) -> int:
    reports = run_all(seed, flip_u_dt_sign=flip_u_dt_sign)
    for r in reports:
        print(r.line())
        for f in r.failures[:1]:
            print("  offending instance:", json.dumps(f)[:2000])
    ok = all(r.passed for r in reports)
    worst = min(r.worst_margin for r in reports if r.name.startswith("fitting-error"))
    print(f"fitting-error chain worst margin (slack included): {worst:.3e}")
    print("all suites passed" if ok else "SELF-CHECK FAILED")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_ingest_check(path: str) -> int:
    ds = load_grid_dataset(path)
    print(json.dumps(ds.summary()))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apulse", description="Transfer learning for active level set estimation.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def experiment_flags(p):
        p.add_argument("config")
        p.add_argument("--out", help="output directory (fallbacks: config out, $APULSE_OUT)")
        p.add_argument("--seed", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--paper-scale", action="store_true", help="30 repeats and full budgets")
        p.add_argument("--workers", type=int, help="parallel runs (default: available CPUs)")

    run = sub.add_parser("run", help="repeat runs per mode; curves, summary and plot")
    experiment_flags(run)
    run.add_argument("--traces", action="store_true", help="also write per-run traces (contain wall times)")
    sweep = sub.add_parser("sweep-kappa", help="iterations to the F1 target across target kappas")
    experiment_flags(sweep)
    sweep.add_argument("--kappas", required=True, help="comma-separated list, e.g. 0.2,0.4,0.6")
    sc = sub.add_parser("selfcheck", help="randomised algebra and oracle suites")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--flip-u-dt-sign", action="store_true", help=argparse.SUPPRESS)
    ing = sub.add_parser("ingest-check", help="validate a grid dataset CSV")
    ing.add_argument("dataset")
    return ap


def _effective(args) -> tuple:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paper_scale:
        cfg.repeats = PAPER_REPEATS
    if args.repeats is not None:
        cfg.repeats = args.repeats
    cfg.validate()
    out = args.out or cfg.out or os.environ.get("APULSE_OUT") or DEFAULT_OUT
    workers = args.workers or cfg.workers or os.cpu_count() or 1
    if workers < 1:
        raise ConfigError("--workers: must be >= 1")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"{out}: output directory not writable")
    return cfg, out, workers


def _kappas(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--kappas: cannot parse {text!r}") from None
    if not vals:
        raise ConfigError("--kappas: empty list")
    return vals


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selfcheck":
            return cmd_selfcheck(args.seed, args.flip_u_dt_sign)
        if args.command == "ingest-check":
            return cmd_ingest_check(args.dataset)
        cfg, out, workers = _effective(args)
        if args.command == "run":
            return cmd_run(cfg, out, workers, args.paper_scale, args.traces)
        return cmd_sweep_kappa(cfg, _kappas(args.kappas), out, workers, args.paper_scale)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level failure report
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
