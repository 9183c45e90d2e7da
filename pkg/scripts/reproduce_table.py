"""Top-arm error and test regret for every method on the three planar scenarios.

Writes one metrics CSV per (scenario, method) under ``--out`` and prints a
summary table averaged over seeds. Defaults are desk scale; raise ``--T``
for closer-to-published numbers.

    python scripts/reproduce_table.py --T 20000 --seeds 0 1 2
"""

import argparse
from pathlib import Path

import numpy as np

from npbandit.environments import PLANAR_SCENARIOS
from npbandit.experiment import METHODS, ExperimentConfig, run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=10000)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--scenarios", nargs="+", default=list(PLANAR_SCENARIOS))
    p.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs/table")
    args = p.parse_args()

    print(f"{'scenario':<10} {'method':<14} {'top_arm_error':>14} {'test_regret':>12} {'avg_regret':>11}")
    for scenario in args.scenarios:
        for method in args.methods:
            config = ExperimentConfig(scenario=scenario, method=method, T=args.T, k=args.k,
                                      seeds=tuple(args.seeds), workers=args.workers,
                                      out_dir=str(Path(args.out) / scenario / method))
            results = run(config)
            mean = {m: np.mean([r.metrics[m] for r in results])
                    for m in ("top_arm_error", "test_regret", "average_regret")}
            print(f"{scenario:<10} {method:<14} {mean['top_arm_error']:>14.4f} "
                  f"{mean['test_regret']:>12.4f} {mean['average_regret']:>11.4f}", flush=True)


if __name__ == "__main__":
    main()
