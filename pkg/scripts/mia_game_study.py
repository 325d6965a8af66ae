"""Empirical attack accuracy against the curator, side by side with the bound.

Runs the full game for a few per-step budgets (nats) and prints one line per
checkpoint: mean accuracy, its standard error, the adversary's own expected
accuracy and the theoretical ceiling.
"""

import argparse

from pacresp.adversary import GameSpec, log_checkpoints, run_game
from pacresp.core import construct_secret_space
from pacresp.learners import make_synthetic_universe, train_pool


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--budgets", default="2^-4,2^-8,2^-12")
    ap.add_argument("--horizon", type=int, default=500)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    u = make_synthetic_universe(args.n, 3, 2, 3.0, seed=0)
    space = construct_secret_space(u, args.m, 0)
    pool = train_pool(u, space)
    for text in args.budgets.split(","):
        base, exp = text.split("^")
        b = float(base) ** float(exp)
        spec = GameSpec(b=b, horizon=args.horizon, checkpoints=log_checkpoints(args.horizon), trials=args.trials)
        rep = run_game(space, pool, u, spec, workers=args.workers)
        print(f"b = {text} nats")
        print(f"{'T':>6} {'acc':>7} {'se':>7} {'E[acc]':>7} {'bound':>7}")
        for s in rep.summary():
            exp_acc = s.get("mean_expected_acc", float("nan"))
            print(f"{s['T']:>6} {s['mean_acc']:7.4f} {s['se']:7.4f} {exp_acc:7.4f} {s['bound']:7.4f}")


if __name__ == "__main__":
    main()
