"""Joint-kNN UCB on the quadratic reward over a continuous action interval.

Prints the share of post-warmup actions within ``--tol`` of the maximizer.

    python scripts/infinite_armed.py --T 20000 --noise 0.01
"""

import argparse

import numpy as np

from npbandit.environments import quadratic_joint
from npbandit.policy import ActionSpace, run_infinite_ucb


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=20000)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = p.parse_args()

    for seed in args.seeds:
        env = quadratic_joint(noise_sigma=args.noise, rng_seed=seed)
        trace, _ = run_infinite_ucb(env, ActionSpace(1, 0.0, 1.0, args.grid), args.T, warmup=args.warmup)
        close = np.abs(trace.arms[args.warmup:] - 0.5) <= args.tol
        print(f"seed {seed}: {close.mean():.4f} of actions within {args.tol} of 0.5")


if __name__ == "__main__":
    main()
