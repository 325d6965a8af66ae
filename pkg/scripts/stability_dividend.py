"""How much of the query stream is free: stable queries cost no noise.

For several class separations, reports the share of universe points on which
every subset model agrees and the mean total noise variance of a one-hot
release at a fixed budget.
"""

import argparse

import numpy as np

from pacresp.calibration import calibrate
from pacresp.core import BeliefState, construct_secret_space
from pacresp.learners import make_synthetic_universe, predict_matrix, train_pool


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--b", type=float, default=2.0**-8)
    args = ap.parse_args()
    prior = BeliefState.uniform(args.m)
    print(f"{'sep':>5} {'stable':>7} {'mean var':>10}")
    for sep in (0.5, 1.0, 2.0, 3.0, 5.0, 10.0):
        u = make_synthetic_universe(500, 3, 2, sep, seed=0)
        pool = train_pool(u, construct_secret_space(u, args.m, 0))
        labels = pool.predict_labels(u.X)
        stable = np.mean((labels == labels[:, :1]).all(axis=1))
        var = np.mean([calibrate(predict_matrix(pool, x), prior, args.b).variances.sum() for x in u.X[:200]])
        print(f"{sep:5.1f} {stable:7.3f} {var:10.3g}")


if __name__ == "__main__":
    main()
