"""Iterations to 80% F1 on Mishra03 across target shifts, for both heuristic acquisitions.

    python3 scripts/kappa_sweep.py --repeats 10 --out results/kappa

Each acquisition gets its own ``sweep_kappa.csv`` table (rows: similarity,
then mean and median iterations per mode; "NA" = target never reached).
"""

import argparse
import sys
from pathlib import Path

from apulse.cli import cmd_sweep_kappa
from apulse.config import config_from_dict


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kappas", default="0.2,0.4,0.6,0.8,1.0")
    ap.add_argument("--modes", default="scratch,vanilla,aplse,diffgp")
    ap.add_argument("--acqs", default="straddle,c2lse")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--f1-rule", default="hard", choices=["hard", "confidence"])
    ap.add_argument("--beta", type=float, default=3.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/kappa")
    args = ap.parse_args(argv)
    kappas = [float(k) for k in args.kappas.split(",")]
    for acq in args.acqs.split(","):
        cfg = config_from_dict({"problem": "mishra03", "modes": args.modes.split(","),
                                "acquisition": {"kind": acq}, "repeats": args.repeats,
                                "f1_rule": args.f1_rule, "beta": args.beta})
        out = Path(args.out) / acq
        out.mkdir(parents=True, exist_ok=True)
        print(f"== {acq}")
        cmd_sweep_kappa(cfg, kappas, out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
