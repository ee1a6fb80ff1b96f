"""Refine the time step on the benchmark and report how the end state moves.

    python scripts/dt_sweep.py --dts 4e-4 2e-4 1e-4 [--workers 3] [--csv out.csv]

For each step size: the distance of the worst agent from the constrained
optimum at t_end, its relative change from the previous (coarser) step, the
late-window consensus spread, and which diagnostic checks pass.
"""

import argparse
import csv
import sys

import numpy as np

from tvswarm.config import load_config, paper_config
from tvswarm.metrics import lemma_suite
from tvswarm.oracle import grid_times, kkt_optimum, oracle_grid
from tvswarm.simulator import simulate_many


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dts", type=float, nargs="+", default=[4e-4, 2e-4, 1e-4])
    ap.add_argument("--scheme", choices=("euler", "rk4"), default=None)
    ap.add_argument("--t-end", type=float, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--csv", default=None, help="also write the table as CSV")
    args = ap.parse_args()

    configs = [load_config(paper_config(), {"dt": dt, "scheme": args.scheme, "t_end": args.t_end})
               for dt in sorted(args.dts, reverse=True)]
    sc0 = configs[0].scenario
    t_end = sc0.integration.t_end
    reports = oracle_grid(sc0.problems, sc0.schedule, grid_times(t_end, configs[0].oracle_interval))
    ystar = kkt_optimum(sc0.problems, t_end).y_star
    trajs = simulate_many([rc.scenario for rc in configs], workers=args.workers)

    rows, prev = [], None
    for rc, tr in zip(configs, trajs):
        err = float(np.max(np.linalg.norm(tr.x[-1] - ystar, axis=1)))
        late = tr.t >= t_end - 5.0 - 1e-9
        rep = lemma_suite(tr, reports, rc.thresholds)
        rows.append({"dt": rc.scenario.integration.dt, "error_t_end": err,
                     "change": "" if prev is None else abs(err - prev) / prev,
                     "max_consensus_late": float(np.max(tr.consensus_linf[late])),
                     "passing": " ".join(r.lemma for r in rep.results if r.passed)})
        prev = err

    print(f"{'dt':>9} {'err(t_end)':>11} {'change':>8} {'consensus':>10}  passing")
    for r in rows:
        change = "" if r["change"] == "" else f"{100 * r['change']:.0f}%"
        print(f"{r['dt']:9.1e} {r['error_t_end']:11.5f} {change:>8} {r['max_consensus_late']:10.4f}  {r['passing']}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
