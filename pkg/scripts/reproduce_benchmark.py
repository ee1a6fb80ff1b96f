"""Run the twelve-agent benchmark and summarize late-horizon tracking.

    python scripts/reproduce_benchmark.py --out results/benchmark [--dt 2e-4] [--no-plot]

Writes the same artifacts as ``tvswarm paper``, then reads diagnostics.csv
back and prints the worst tracking error and consensus spread over
[--from, t_end] along with the largest constraint margin.
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from tvswarm.cli import execute_run
from tvswarm.config import load_config, paper_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results/benchmark"))
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("--scheme", choices=("euler", "rk4"), default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--t-end", type=float, default=None)
    ap.add_argument("--from", dest="t_from", type=float, default=15.0)
    ap.add_argument("--no-plot", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rc = load_config(paper_config(), {"dt": args.dt, "scheme": args.scheme, "seed": args.seed, "t_end": args.t_end})
    code, manifest = execute_run(rc, args.out, "benchmark", plot=False if args.no_plot else None)

    diag = np.genfromtxt(args.out / "diagnostics.csv", delimiter=",", names=True)
    t_end = rc.scenario.integration.t_end
    late = diag[diag["t"] >= args.t_from - 1e-9]
    tracked = late[~np.isnan(late["tracking_max"])]
    print(f"\nwindow [{args.t_from:g}, {t_end:g}]")
    k = np.argmax(tracked["tracking_max"])
    print(f"  max tracking error    {tracked['tracking_max'][k]:.4f}  (t = {tracked['t'][k]:.2f})")
    k = np.argmax(late["consensus_linf"])
    print(f"  max consensus spread  {late['consensus_linf'][k]:.4f}  (t = {late['t'][k]:.2f})")
    print(f"  max constraint margin {np.max(diag['margin_max']):.3e}")
    print(f"  artifacts in {manifest['output_dir']}, exit code {code}")


if __name__ == "__main__":
    main()
