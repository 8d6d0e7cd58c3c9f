"""Mean F1 curves per transfer mode on the synthetic benchmarks.

    python3 scripts/curves.py --acq straddle --repeats 10 --out results/curves

Writes one ``apulse run`` output directory per benchmark.
"""

import argparse
import sys
from pathlib import Path

from apulse.cli import cmd_run
from apulse.config import config_from_dict


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--functions", default="bird,mc3d,mishra03")
    ap.add_argument("--modes", default="scratch,vanilla,aplse,diffgp")
    ap.add_argument("--acq", default="straddle", choices=["straddle", "c2lse", "rmile"])
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--budget", type=int, help="override the standard budget (also shrinks the source set)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/curves")
    args = ap.parse_args(argv)
    for name in args.functions.split(","):
        problem = {"name": name}
        if args.budget:
            problem["budget"] = args.budget
        acq = {"kind": args.acq}
        if args.acq == "rmile":
            acq["max_candidates"] = 500  # lookahead over the full grid is too slow for desk runs
        cfg = config_from_dict({"problem": problem, "modes": args.modes.split(","), "acquisition": acq,
                                "repeats": args.repeats, "seed": args.seed})
        out = Path(args.out) / f"{name}_{args.acq}"
        out.mkdir(parents=True, exist_ok=True)
        print(f"== {name} ({args.acq})")
        cmd_run(cfg, out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
