"""Calibrate the end-to-end H thresholds against the Bayes-optimal classifier.

Usage: python3 scripts/calibrate.py [--seeds 0 1 2]
"""

import argparse
import copy
import warnings

from gsmflow.config import RunConfig
from gsmflow.data import generate_benchmark
from gsmflow.evaluation import bayes_reference
from gsmflow.pipeline import evaluate_run, train_run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = parser.parse_args()
    warnings.simplefilter("ignore")
    base = RunConfig()
    dataset, truth = generate_benchmark(base.bench_spec())
    s, u, h = bayes_reference(dataset, truth)
    print(f"bayes        S={s:.4f} U={u:.4f} H={h:.4f}")
    for seed in args.seeds:
        cfg = RunConfig({"seed": str(seed), "bench.seed": "0"})
        run, _ = train_run(dataset, cfg)
        report = evaluate_run(run, dataset, truth)
        crippled = copy.deepcopy(run)
        crippled.flow.zero_condition_weights()
        zeroed = evaluate_run(crippled, dataset, truth)
        print(f"seed {seed}       S={report.seen_acc:.4f} U={report.unseen_acc:.4f} "
              f"H={report.harmonic_mean:.4f}  zeroed-condition H={zeroed.harmonic_mean:.4f}")


if __name__ == "__main__":
    main()
