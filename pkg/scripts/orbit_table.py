"""Tabulate periodic orbits with their exponents and the curvature bound."""

import argparse

from lyapspec import orbits
from lyapspec.models import get_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="MRANK1")
    ap.add_argument("--max-len", type=int, default=6)
    args = ap.parse_args()
    m = get_model(args.model)
    print(f"{'word':>12} {'period':>8} {'chi':>10} {'bound':>10}")
    for o in orbits.enumerate_cycles(m, args.max_len):
        rep = orbits.chi_bound_check(o)
        print(f"{o.label:>12} {o.period:8.3f} {rep.chi:10.5f} {rep.bound + 0.0:10.5f}")


if __name__ == "__main__":
    main()
