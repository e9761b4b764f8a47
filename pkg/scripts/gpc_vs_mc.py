"""Galerkin gPC moments against Monte Carlo for increasing expansion degree.

    python scripts/gpc_vs_mc.py --system linear_decay --samples 100000
"""

import argparse

from gpcctl.sim import compare_gpc_mc


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--system", default="linear_decay", choices=["linear_decay", "constant_decay", "aircraft_open_loop"])
    ap.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'d':>2} {'max |mean err|/SE':>18} {'max |std err|/SE':>17} {'max std err':>12}")
    for d in args.degrees:
        rep = compare_gpc_mc(args.system, d=d, n_samples=args.samples, seed=args.seed)
        zm = (rep["mean_error"] / rep["se_mean"]).max()
        zs = (rep["std_error"] / rep["se_std"]).max()
        print(f"{d:>2} {zm:>18.3f} {zs:>17.3f} {rep['std_error'].max():>12.3e}")
        if "gpc_std_error_exact" in rep:
            print(f"   closed-form error: mean {rep['gpc_mean_error_exact'].max():.2e}, "
                  f"std {rep['gpc_std_error_exact'].max():.2e}")


if __name__ == "__main__":
    main()
