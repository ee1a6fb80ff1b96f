"""Runtime checks of the convergence claims on recorded trajectories.

Each check returns raw evidence next to its verdict so thresholds can be
revisited without rerunning anything.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from tvswarm.barrier import BarrierSchedule, in_domain, penalized_jet
from tvswarm.controller import gain_audit, phi
from tvswarm.graph import Graph
from tvswarm.problem import ProblemSet
from tvswarm.simulator import SwarmState, Trajectory, consensus_linf, edge_l1

W1_FLOOR = 1e-14


class NotMeasurable(ValueError):
    """The requested decay window holds too few usable samples."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    W1: float
    consensus_linf: float
    edge_l1: float
    phi_max: float
    margin_max: float
    tracking_max: float


def diagnostics(problems: ProblemSet, schedule: BarrierSchedule, graph: Graph, state: SwarmState,
                ystar) -> DiagnosticsRecord:
    """All diagnostics of one state, rebuilt agent by agent from the field jets."""
    X, t = np.asarray(state.x, dtype=float), float(state.t)
    grad_sum = np.zeros(problems.dim)
    phi_max = 0.0
    margin_max = -np.inf
    for i, agent in enumerate(problems.agents):
        grad_sum += penalized_jet(agent, schedule, X[i], t).gradient
        phi_max = max(phi_max, float(np.linalg.norm(phi(agent, schedule, X[i], t))))
        if agent.constraints:
            margin_max = max(margin_max, float(np.max(in_domain(agent, schedule, X[i], t)[1])))
    track = float(np.max(np.linalg.norm(X - np.asarray(ystar, dtype=float), axis=1)))
    return DiagnosticsRecord(t, 0.5 * float(grad_sum @ grad_sum), consensus_linf(X), edge_l1(graph, X),
                             phi_max, margin_max, track)


def floor_time(trajectory: Trajectory, floor=W1_FLOOR) -> float:
    """First sample time at which W1 drops to the floor (inf if never)."""
    hit = np.flatnonzero(trajectory.W1 <= floor)
    return float(trajectory.t[hit[0]]) if hit.size else np.inf


def w1_decay_fit(trajectory: Trajectory, window=None, floor=W1_FLOOR) -> float:
    """Least-squares slope of log W1 against t over ``window``.

    The default window is [0, min(5, first floor time)].  Samples at or below
    the floor are excluded; fewer than three usable samples is NotMeasurable.
    """
    t, w = np.asarray(trajectory.t), np.asarray(trajectory.W1)
    if window is None:
        window = (0.0, min(5.0, floor_time(trajectory, floor)))
    a, b = window
    sel = (t >= a - 1e-12) & (t <= b + 1e-12)
    if np.any(sel & (w <= floor)):
        sel &= t < t[sel & (w <= floor)][0]
    if np.count_nonzero(sel) < 3:
        raise NotMeasurable(f"window [{a}, {b}] has {np.count_nonzero(sel)} samples above the W1 floor")
    return float(np.polyfit(t[sel], np.log(w[sel]), 1)[0])


def match_times(sample_times, query_times, rtol=0.0, atol=1e-9):
    """Index pairs (i, j) with ``sample_times[i]`` equal to ``query_times[j]`` within tolerance."""
    s = np.asarray(sample_times, dtype=float)
    pairs = []
    for j, q in enumerate(np.asarray(query_times, dtype=float)):
        hit = np.flatnonzero(np.isclose(s, q, rtol=rtol, atol=atol))
        if hit.size:
            pairs.append((int(hit[0]), j))
    return pairs


def tracking_series(trajectory: Trajectory, oracle_samples):
    """``(t, max_i ||x_i - y*(t)||)`` at trajectory samples that have an oracle value.

    ``oracle_samples`` is a sequence of OptimumReport or of ``(t, y_star)`` pairs.
    """
    ts, ys = _unpack(oracle_samples)
    pairs = match_times(trajectory.t, ts)
    if not pairs:
        return np.empty(0), np.empty(0)
    idx, jdx = map(np.array, zip(*pairs))
    err = np.linalg.norm(trajectory.x[idx] - ys[jdx][:, None, :], axis=-1).max(axis=1)
    return trajectory.t[idx], err


def _unpack(oracle_samples):
    ts, ys = [], []
    for s in oracle_samples:
        if hasattr(s, "y_star"):
            ts.append(s.t)
            ys.append(s.y_star)
        else:
            ts.append(s[0])
            ys.append(s[1])
    return np.asarray(ts, dtype=float), np.asarray(ys, dtype=float).reshape(len(ts), -1)


def diagnostics_table(trajectory: Trajectory, oracle_samples=()):
    """Per-sample diagnostics; tracking_max is NaN where no oracle value exists."""
    track = np.full(len(trajectory.t), np.nan)
    if len(oracle_samples):
        ts, ys = _unpack(oracle_samples)
        for i, j in match_times(trajectory.t, ts):
            track[i] = np.max(np.linalg.norm(trajectory.x[i] - ys[j], axis=-1))
    return [DiagnosticsRecord(float(t), float(w), float(c), float(e), float(p), float(mm), float(tr))
            for t, w, c, e, p, mm, tr in zip(trajectory.t, trajectory.W1, trajectory.consensus_linf,
                                              trajectory.edge_l1, trajectory.phi_max,
                                              trajectory.margin_max, track)]


def diagnostics_csv(records) -> str:
    cols = ["t", "W1", "consensus_linf", "edge_l1", "phi_max", "margin_max", "tracking_max"]
    lines = [",".join(cols)]
    for r in records:
        lines.append(",".join("" if np.isnan(v := getattr(r, c)) else repr(float(v)) for c in cols))
    return "\n".join(lines) + "\n"


def empirical_constants(trajectory: Trajectory) -> dict:
    """Observed sups of the time-variation rates and Hessian spectral extrema."""
    rates = np.asarray(trajectory.time_rate_sups)
    return {
        "sup_time_rate_objective_gradient": float(rates[:, 0].max()),
        "sup_time_rate_constraint_gradient": float(rates[:, 1].max()),
        "sup_time_rate_constraint_value": float(rates[:, 2].max()),
        "min_hessian_eigenvalue": float(np.min(trajectory.hess_eig_min)),
        "max_hessian_eigenvalue": float(np.max(trajectory.hess_eig_max)),
    }


# -- lemma suite ---------------------------------------------------------------

@dataclass(frozen=True)
class LemmaThresholds:
    decay_rate: float = -2.0
    decay_tol: float = 0.1
    decay_window: tuple | None = None
    consensus: float = 1e-2
    tracking: float = 0.1
    # fitted rise of phi_max across the final half, relative to its mean
    phi_trend_tol: float = 0.25

    @classmethod
    def from_config(cls, cfg: dict | None):
        cfg = dict(cfg or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"thresholds: unknown keys {sorted(unknown)}")
        if cfg.get("decay_window") is not None:
            cfg["decay_window"] = tuple(float(v) for v in cfg["decay_window"])
        return cls(**cfg)


@dataclass
class LemmaResult:
    lemma: str
    passed: bool
    evidence: dict
    threshold: dict

    def as_dict(self):
        return {"lemma": self.lemma, "pass": bool(self.passed), "evidence": self.evidence,
                "threshold": self.threshold}


@dataclass
class LemmaReport:
    results: list
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, lemma) -> LemmaResult:
        for r in self.results:
            if r.lemma == lemma:
                return r
        raise KeyError(lemma)

    def to_json(self) -> str:
        doc = {"lemmas": [r.as_dict() for r in self.results], **self.extras}
        return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        rows = [("check", "result", "evidence")]
        for r in self.results:
            ev = ", ".join(f"{k}={_short(v)}" for k, v in r.evidence.items())
            rows.append((r.lemma, "PASS" if r.passed else "FAIL", ev))
        w0 = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w0}}  {b:<6}  {c}" for a, b, c in rows) + "\n"


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def lemma_suite(trajectory: Trajectory, oracle_samples=(), thresholds: LemmaThresholds | None = None
                ) -> LemmaReport:
    th = thresholds or LemmaThresholds()
    if len(trajectory.t) == 0:
        raise ValueError("empty trajectory")
    t, t_end = trajectory.t, float(trajectory.t[-1])
    res = []

    # domain invariance
    mm = trajectory.margin_max
    worst = float(max(np.max(mm), trajectory.max_margin))
    res.append(LemmaResult("L2", bool(worst < 0), {"max_margin": worst, "samples": int(len(t))},
                           {"max_margin_lt": 0.0}))

    # W1 decay rate
    try:
        slope = w1_decay_fit(trajectory, th.decay_window)
        ok = abs(slope - th.decay_rate) <= th.decay_tol
        ev = {"slope": slope}
    except NotMeasurable as err:
        # W1 already at the floor means the invariant holds trivially
        at_floor = bool(trajectory.W1[0] <= W1_FLOOR)
        ok, ev = at_floor, {"slope": None, "note": str(err)}
    res.append(LemmaResult("L3", bool(ok), ev, {"slope": th.decay_rate, "tol": th.decay_tol}))

    # consensus at t_end
    cons = float(trajectory.consensus_linf[-1])
    res.append(LemmaResult("L4", bool(cons <= th.consensus),
                           {"consensus_linf_t_end": cons, "t_end": t_end,
                            "consensus_linf_final_half_max": float(np.max(trajectory.consensus_linf[t >= t_end / 2]))},
                           {"consensus_linf_le": th.consensus}))

    # phi bounded, no upward trend over the final half
    pm = trajectory.phi_max
    finite = bool(np.all(np.isfinite(pm)))
    sel = t >= t_end / 2
    rise = 0.0
    if finite and np.count_nonzero(sel) >= 2 and t_end > 0:
        slope = float(np.polyfit(t[sel], pm[sel], 1)[0])
        rise = slope * (t_end / 2) / max(float(np.mean(pm[sel])), 1e-300)
    res.append(LemmaResult("L5", bool(finite and rise <= th.phi_trend_tol),
                           {"sup_phi": float(np.max(pm)) if finite else float("inf"), "relative_rise": rise},
                           {"relative_rise_le": th.phi_trend_tol}))

    # tracking at t_end
    tt, err = tracking_series(trajectory, oracle_samples) if len(oracle_samples) else (np.empty(0), np.empty(0))
    if tt.size and np.isclose(tt[-1], t_end, atol=1e-9):
        track = float(err[-1])
        res.append(LemmaResult("T1", bool(track <= th.tracking),
                               {"tracking_max_t_end": track, "t_end": t_end,
                                "tracking_max_final_half_max": float(np.max(err[tt >= t_end / 2]))},
                               {"tracking_max_le": th.tracking}))
    else:
        res.append(LemmaResult("T1", False, {"note": "no oracle sample at t_end"},
                               {"tracking_max_le": th.tracking}))

    extras = {"empirical_constants": empirical_constants(trajectory),
              "gain_condition": asdict(gain_audit(trajectory))}
    return LemmaReport(res, extras)
