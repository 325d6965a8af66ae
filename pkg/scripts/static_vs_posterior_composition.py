"""Cumulative leakage bound: posterior-aware linear sum against static composition.

Static calibration charges each step against the worst prior it might face;
with a per-step ceiling ``b'`` its bound grows far faster than ``T b``.
"""

import argparse

from pacresp import accounting


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--b", type=float, default=0.01)
    ap.add_argument("--b-prime", type=float, default=1.0)
    args = ap.parse_args()
    print(f"{'T':>6} {'linear':>10} {'static':>12} {'static(cap)':>12} {'MIA lin':>8} {'MIA static':>10}")
    for T in (1, 4, 16, 64, 256, 1024, 2048):
        lin = T * args.b
        raw = accounting.static_composition_bound(args.b, args.b_prime, T, cap=False)
        cap = accounting.static_composition_bound(args.b, args.b_prime, T)
        print(
            f"{T:>6} {lin:10.4g} {raw:12.4g} {cap:12.4g}"
            f" {100 * accounting.mia_bound_from_mi(lin):8.2f} {100 * accounting.mia_bound_from_mi(raw):10.2f}"
        )


if __name__ == "__main__":
    main()
