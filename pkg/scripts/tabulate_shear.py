"""Measure tau(nu) for the seeded alternating sine shear and print nu * tau."""

import argparse
import logging
import time

from accelrelax.dissipation import build_tau_table
from accelrelax.field import GridSpec
from accelrelax.flows import FlowSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--nus", type=float, nargs="+", default=[1e-2, 3e-3, 1e-3])
    ap.add_argument("--tol", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="tau_table.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    flow = FlowSpec.alternating_shear(1.0, 1.0, seed=args.seed)
    t0 = time.time()
    table = build_tau_table(flow, sorted(args.nus, reverse=True), grid=GridSpec(args.n), tol=args.tol,
                            workers=args.workers)
    table.to_csv(args.out, [f"alternating shear seed={args.seed} n={args.n}"])
    print(f"{'nu':>10} {'tau':>10} {'nu*tau':>10}  flags")
    for r in table.rows:
        print(f"{r.nu:10.3g} {r.tau:10.4g} {r.nu * r.tau:10.4g}  {r.flags}")
    print(f"wrote {args.out} ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
