"""Command-line entry point.

    tvswarm run --config configs/paper.json --out results/
    tvswarm check-derivatives --config configs/paper.json [--inject-gradient-fault]
    tvswarm oracle --config configs/paper.json --times 0:20:0.1
    tvswarm paper --out results/

Exit codes: 0 success, 2 invalid input, 3 runtime or step failure, 4 checks failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from tvswarm.barrier import DomainViolation, audit_derivatives
from tvswarm.config import ConfigError, RunConfig, load_config, paper_config
from tvswarm.controller import SingularHessian
from tvswarm.metrics import diagnostics_csv, diagnostics_table, lemma_suite
from tvswarm.oracle import OracleError, grid_times, oracle_csv, oracle_grid
from tvswarm.problem import AgentProblem, ProblemSet, ScaledGradient, warn_if_nonconvex
from tvswarm.simulator import StepFailure, simulate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_CHECKS = 0, 2, 3, 4

log = logging.getLogger("tvswarm")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def parse_times(text: str) -> np.ndarray:
    """``"0,0.5,1"`` or ``"start:stop:step"`` (stop inclusive, integer multiples of step)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"time range must be start:stop:step, got {text!r}")
        start, stop, stepv = map(float, parts)
        if not stepv > 0 or stop < start:
            raise ValueError(f"bad time range {text!r}")
        return start + grid_times(stop - start, stepv)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _overrides(args):
    return {"dt": args.dt, "t_end": args.t_end, "seed": args.seed, "scheme": args.scheme, "epsilon": args.epsilon}


def execute_run(rc: RunConfig, out: Path, config_label: str, plot=None) -> tuple[int, dict]:
    """Simulate, check and write artifacts; returns ``(exit code, manifest)``."""
    start = time.perf_counter()
    sc = rc.scenario
    out.mkdir(parents=True, exist_ok=True)
    log.info("simulating %d agents to t=%g with %s, dt=%g", sc.problems.n, sc.integration.t_end,
             sc.integration.scheme, sc.integration.dt)
    traj = simulate(sc)
    times = grid_times(sc.integration.t_end, rc.oracle_interval)
    if not np.isclose(times[-1], sc.integration.t_end):
        times = np.append(times, sc.integration.t_end)
    log.info("solving reference optimum at %d times", len(times))
    reports = oracle_grid(sc.problems, sc.schedule, times)
    lemmas = lemma_suite(traj, reports, rc.thresholds)

    files = {"trajectory.csv": traj.to_csv(),
             "diagnostics.csv": diagnostics_csv(diagnostics_table(traj, reports)),
             "lemmas.json": lemmas.to_json()}
    if rc.plot if plot is None else plot:
        from tvswarm.plots import trajectory_svg
        files["trajectory.svg"] = trajectory_svg(traj, reports)
    for name, text in files.items():
        (out / name).write_text(text)
    code = EXIT_OK if lemmas.passed else EXIT_CHECKS
    manifest = {
        "scenario": config_label,
        "output_dir": str(out),
        "files": [{"name": n, "sha256": _sha256(out / n), "bytes": (out / n).stat().st_size} for n in files],
        "duration_s": round(time.perf_counter() - start, 3),
        "exit_code": code,
        "config": rc.raw,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    sys.stdout.write(lemmas.table())
    return code, manifest


def _convexity_probe(args, rc: RunConfig) -> None:
    if args.check_convexity:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            worst = warn_if_nonconvex(rc.scenario.problems, np.random.default_rng(rc.scenario.seed),
                                      t_max=max(rc.scenario.integration.t_end, 1e-3))
        log.warning("smallest sampled Hessian eigenvalue %.3g", worst)


def cmd_run(args) -> int:
    rc = load_config(args.config, _overrides(args))
    _convexity_probe(args, rc)
    return execute_run(rc, Path(args.out), str(args.config), plot=False if args.no_plot else None)[0]


def cmd_paper(args) -> int:
    rc = load_config(paper_config(), _overrides(args))
    _convexity_probe(args, rc)
    return execute_run(rc, Path(args.out), "built-in paper preset", plot=False if args.no_plot else None)[0]


def cmd_check_derivatives(args) -> int:
    rc = load_config(args.config)
    problems = rc.scenario.problems
    if args.inject_gradient_fault:
        agents = list(problems.agents)
        agents[0] = AgentProblem(ScaledGradient(agents[0].objective, 1.01), agents[0].constraints)
        problems = ProblemSet(tuple(agents))
    t_end = max(rc.scenario.integration.t_end, 1e-3)
    report = audit_derivatives(problems, rc.scenario.schedule, args.samples, args.seed, (0.0, t_end))
    for name, err in sorted(report.errors.items()):
        print(f"{name:40s} {err:.3e}")
    ok = report.ok(args.tol)
    print(f"max scaled error {report.max_error:.3e} ({'PASS' if ok else 'FAIL'} at tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_CHECKS


def cmd_oracle(args) -> int:
    rc = load_config(args.config)
    sc = rc.scenario
    reports = oracle_grid(sc.problems, sc.schedule, parse_times(args.times), strict=False)
    failed = [r for r in reports if "unsolved" in r.flags]
    for r in failed:
        log.error("t=%g: %s", r.t, r.flags[-1])
    text = oracle_csv(reports)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_RUNTIME if failed else EXIT_OK


def _sim_flags(p):
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=("euler", "rk4"))
    p.add_argument("--epsilon", type=float, help="sgn smoothing width, 0 for exact sgn")
    p.add_argument("--check-convexity", action="store_true",
                   help="sample Hessian eigenvalues first and warn on negative curvature")


def _common(p, sim=True):
    p.add_argument("--config", required=True, help="scenario JSON file")
    if sim:
        _sim_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvswarm", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and check the convergence claims")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paper", help="run the built-in twelve-agent benchmark")
    _sim_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_paper)

    p = sub.add_parser("check-derivatives", help="finite-difference audit of all jets")
    _common(p, sim=False)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--inject-gradient-fault", action="store_true",
                   help="scale one objective gradient by 1.01 to show the audit catches it")
    p.set_defaults(func=cmd_check_derivatives)

    p = sub.add_parser("oracle", help="centralized optimum at given times (CSV)")
    _common(p, sim=False)
    p.add_argument("--times", required=True, help="comma list or start:stop:step")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (StepFailure, SingularHessian, OracleError, DomainViolation) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
