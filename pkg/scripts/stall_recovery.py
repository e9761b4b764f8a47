"""Closed-loop stall recovery from 25 and 30 deg for every controller order.

Writes one trajectory CSV per member plus ``summary.csv`` with recovery
metrics, under the output directory (default ``runs/stall``).

    python scripts/stall_recovery.py --seeds 20 --out runs/stall
"""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from gpcctl.sim import ORDERS, SimConfig, emit_report, run_ensemble


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--alpha0", type=float, nargs="+", default=[25.0, 30.0])
    ap.add_argument("--horizon", type=float, default=30.0)
    ap.add_argument("--out", type=Path, default=Path("runs/stall"))
    args = ap.parse_args()

    cfg = replace(SimConfig(), T=args.horizon)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for a0 in args.alpha0:
        members = [(o, a0, s) for o in ORDERS for s in range(args.seeds)]
        t0 = time.perf_counter()
        runs = run_ensemble(cfg, members)
        print(f"alpha0 = {a0:g} deg: {len(runs)} runs in {time.perf_counter() - t0:.1f} s")
        for (o, a, s), tr in zip(members, runs):
            emit_report(tr, args.out / f"a{a:g}_k{o}_s{s}.csv", "csv")
            rows.append({"alpha0_deg": a, "order": o, "seed": s, **tr.metrics})
        for o in ORDERS:
            n = sum(r["recovered"] for r in rows if r["alpha0_deg"] == a0 and r["order"] == o)
            print(f"  order {o}: {n}/{args.seeds} recovered")
    with open(args.out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
