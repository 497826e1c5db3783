"""Grid-search fixed step sizes per (experiment, method) and commit the winners.

Scores are tail held-out accuracies on tuning seeds disjoint from the
reporting seeds. Usage: python scripts/grid_search.py [--resume] [experiment ...]
"""

import argparse
import csv
import time
from pathlib import Path

from qsgd.experiments import ETA_GRID, grid_search
from qsgd.optimize import METHODS

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "qsgd" / "configs"
SCORES = CONFIG_DIR / "grid_scores.csv"
STEP_SIZES = CONFIG_DIR / "step_sizes.cfg"
FIELDS = ["experiment", "method", "eta", "tail_accuracy"]


def write_scores(rows):
    with SCORES.open("w", newline="") as fh:
        w = csv.DictWriter(fh, FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_step_sizes(rows):
    best = {}
    for r in rows:
        key = (r["experiment"], r["method"])
        if key not in best or float(r["tail_accuracy"]) > best[key][1]:
            best[key] = (float(r["eta"]), float(r["tail_accuracy"]))
    lines = ["# experiment.method = eta, chosen by scripts/grid_search.py (scores in grid_scores.csv)"]
    lines += [f"{e}.{m} = {eta}" for (e, m), (eta, _) in sorted(best.items())]
    STEP_SIZES.write_text("\n".join(lines) + "\n")


def main(experiments, resume):
    rows = []
    if SCORES.exists():
        with SCORES.open() as fh:
            rows = list(csv.DictReader(fh))
    done = {(r["experiment"], r["method"]) for r in rows} if resume else set()
    rows = [r for r in rows if r["experiment"] not in experiments or (r["experiment"], r["method"]) in done]
    for exp_id in experiments:
        for method in METHODS:
            if (exp_id, method) in done:
                continue
            t0 = time.time()
            scores = grid_search(exp_id, method, seeds=(1000,), etas=ETA_GRID)
            for eta, score in scores.items():
                rows.append({"experiment": exp_id, "method": method, "eta": eta, "tail_accuracy": f"{score:.4f}"})
            print(exp_id, method, scores, f"{time.time() - t0:.0f}s", flush=True)
            write_scores(rows)
    write_step_sizes(rows)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("experiments", nargs="*", default=["exp1", "exp2-bell", "exp2", "exp3"])
    parser.add_argument("--resume", action="store_true", help="keep pairs already in grid_scores.csv")
    args = parser.parse_args()
    main(args.experiments, args.resume)
