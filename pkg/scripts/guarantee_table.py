"""Print the MIA bound grid (percent) for per-step budgets and query counts.

Budgets are taken as nats. ``--csv`` writes the full machine-readable table
through the CLI writer instead.
"""

import argparse
import math
import sys

from pacresp import accounting
from pacresp.cli import write_guarantee_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", action="store_true")
    ap.add_argument("--dp-delta", type=float, default=1e-5)
    args = ap.parse_args()
    budgets, horizons = accounting.GRID_BUDGETS, accounting.GRID_HORIZONS
    if args.csv:
        write_guarantee_table(sys.stdout, budgets, horizons, accounting.GRID_DP_TARGETS, args.dp_delta)
        return
    print("T".rjust(9) + "".join(f"2^{round(math.log2(b))}".rjust(9) for b in budgets))
    for T in horizons:
        cells = [100 * accounting.mia_bound_from_mi(T * b) for b in budgets]
        print(f"{T:>9d}" + "".join(f"{c:9.2f}" for c in cells))
    for eps, Ts in accounting.footer_rows(budgets, accounting.GRID_DP_TARGETS, args.dp_delta).items():
        print(f"eps={eps:<5g}" + "".join(f"{T:9.3g}" for T in Ts))


if __name__ == "__main__":
    main()
