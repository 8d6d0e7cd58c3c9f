"""Hard-label similarity between the unshifted and shifted benchmark functions.

    python3 scripts/similarity.py mishra03 0.2,0.4,0.6,0.8,1.0
"""

import sys

from apulse.bench import TASKS, FunctionName, SyntheticFunction, level_set_similarity, make_uniform_grid
from apulse.problem import hard_labels


def similarities(name, kappas):
    task = TASKS[FunctionName.parse(name)]
    grid = make_uniform_grid(task.bounds, task.resolution)
    labels = lambda k: hard_labels(SyntheticFunction(name, k)(grid), task.h, task.direction)
    base = labels(0.0)
    return {k: level_set_similarity(base, labels(k)) for k in kappas}


if __name__ == "__main__":
    name = sys.argv[1] if len(sys.argv) > 1 else "mishra03"
    kappas = [float(k) for k in (sys.argv[2] if len(sys.argv) > 2 else "0.2,0.4,0.6,0.8,1.0").split(",")]
    for k, s in similarities(name, kappas).items():
        print(f"kappa {k:g}: {100 * s:.1f}%")
