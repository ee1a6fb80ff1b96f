"""Vary the consensus gain or the random seed on the benchmark.

    python scripts/gain_sweep.py --betas 10 25 50 100 [--dt 1e-4]
    python scripts/gain_sweep.py --seeds 0 1 2 3

A larger gain holds the agents together through the constraint switches but
raises the chattering amplitude, which grows with gain times step size.
"""

import argparse
import sys

import numpy as np

from tvswarm.config import load_config, paper_config
from tvswarm.metrics import tracking_series
from tvswarm.oracle import grid_times, oracle_grid
from tvswarm.simulator import simulate_many


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    group = ap.add_mutually_exclusive_group()
    group.add_argument("--betas", type=float, nargs="+")
    group.add_argument("--seeds", type=int, nargs="+")
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("--t-end", type=float, default=None)
    ap.add_argument("--from", dest="t_from", type=float, default=15.0)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    base = {"dt": args.dt, "t_end": args.t_end}
    runs = []
    if args.seeds:
        for seed in args.seeds:
            runs.append((f"seed={seed}", load_config(paper_config(), {**base, "seed": seed})))
    else:
        for beta in args.betas or [25.0]:
            doc = paper_config()
            doc["beta"] = beta
            runs.append((f"beta={beta:g}", load_config(doc, base)))

    sc0 = runs[0][1].scenario
    reports = oracle_grid(sc0.problems, sc0.schedule, grid_times(sc0.integration.t_end, runs[0][1].oracle_interval))
    trajs = simulate_many([rc.scenario for _, rc in runs], workers=args.workers)

    print(f"{'run':>12} {'tracking':>9} {'consensus':>10} {'margin':>11} {'halvings':>8}")
    for (label, _), tr in zip(runs, trajs):
        tt, err = tracking_series(tr, reports)
        late = tt >= args.t_from - 1e-9
        sel = tr.t >= args.t_from - 1e-9
        margin = max(float(np.max(tr.margin_max)), tr.max_margin)
        print(f"{label:>12} {np.max(err[late]):9.4f} {np.max(tr.consensus_linf[sel]):10.4f} {margin:11.3e} "
              f"{tr.halvings:8d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
