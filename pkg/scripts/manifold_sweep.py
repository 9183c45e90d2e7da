"""kNN-UCB regret on a curve embedded in D dimensions, with the k rule
driven by the intrinsic dimension versus the ambient one.

    python scripts/manifold_sweep.py --T 30000 --ambient 4 10 20
"""

import argparse

import numpy as np

from npbandit.experiment import ExperimentConfig, run_seeds


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=30000)
    p.add_argument("--ambient", type=int, nargs="+", default=[10])
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    print(f"{'D':>4} {'regret d=1':>12} {'regret d=D':>12} {'median ratio':>13}")
    for D in args.ambient:
        final = {}
        for d in (1, D):
            config = ExperimentConfig(scenario="manifold-curve", method="knn-ucb", T=args.T, ambient_dim=D,
                                      intrinsic_dim=d, seeds=tuple(args.seeds), test_size=1000,
                                      workers=args.workers)
            final[d] = np.array([r.metrics["regret"] for r in run_seeds(config)])
        print(f"{D:>4} {final[1].mean():>12.1f} {final[D].mean():>12.1f} {np.median(final[1] / final[D]):>13.3f}",
              flush=True)


if __name__ == "__main__":
    main()
