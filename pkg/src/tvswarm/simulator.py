"""Fixed-step integration of single-integrator agents under the control law.

Steps that leave the barrier domain are discretization artifacts (the exact
flow stays inside), so a failed step is redone as two half steps, recursively,
up to ``max_halvings`` levels deep.  The sliding-mode term makes the vector
field discontinuous: RK4 is available but its order is not guaranteed, and
explicit Euler is the default.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from tvswarm.barrier import BarrierSchedule, DomainViolation
from tvswarm.controller import SwarmControl, swarm_control
from tvswarm.graph import Graph
from tvswarm.problem import ProblemSet


class StepFailure(RuntimeError):
    def __init__(self, t, cause: DomainViolation):
        self.t = float(t)
        self.cause = cause
        super().__init__(f"step from t={self.t:.6g} failed after all halvings: {cause}")


class ScenarioError(ValueError):
    """Scenario violates a standing assumption (connectivity, feasible start)."""


@dataclass(frozen=True)
class SwarmState:
    t: float
    x: np.ndarray  # (n, m)

    @property
    def stacked(self):
        return self.x.reshape(-1)


@dataclass(frozen=True)
class IntegrationConfig:
    scheme: str = "euler"
    dt: float = 2e-4
    t_end: float = 20.0
    sample_stride: int = 50
    smoothing_epsilon: float = 0.0
    max_halvings: int = 20

    def __post_init__(self):
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"scheme must be 'euler' or 'rk4', got {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.smoothing_epsilon < 0:
            raise ValueError("smoothing_epsilon must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Scenario:
    graph: Graph
    problems: ProblemSet
    schedule: BarrierSchedule
    beta: float
    init: np.ndarray
    integration: IntegrationConfig = IntegrationConfig()
    seed: int = 0

    def __post_init__(self):
        validate_scenario(self)

    def initial_state(self) -> SwarmState:
        return SwarmState(0.0, np.array(self.init, dtype=float))

    def with_integration(self, **changes) -> "Scenario":
        return replace(self, integration=replace(self.integration, **changes))


def validate_scenario(sc: Scenario):
    if sc.graph.n != sc.problems.n:
        raise ScenarioError(f"graph has {sc.graph.n} nodes but there are {sc.problems.n} agents")
    if not sc.graph.is_connected():
        raise ScenarioError("communication graph must be connected (fixed, undirected, connected topology)")
    if not sc.beta > 0:
        raise ScenarioError("beta must be positive")
    x0 = np.asarray(sc.init, dtype=float)
    if x0.shape != (sc.problems.n, sc.problems.dim):
        raise ScenarioError(f"initial state shape {x0.shape} != ({sc.problems.n}, {sc.problems.dim})")
    if not np.all(np.isfinite(x0)):
        raise ScenarioError("initial state must be finite")
    g0 = sc.problems.constraint_jets(x0, 0.0).value
    bad = sc.problems.constraint_mask & ~(g0 < 0)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ScenarioError(
            f"initial state must be strictly feasible, g_i(x_i(0), 0) < 0: agent {i + 1} constraint {j + 1} "
            f"has g = {g0[i, j]:.6g}")


def random_init(problems: ProblemSet, seed, low=-10.0, high=0.0, offsets=None):
    """Benchmark initialization: a uniform base per agent plus fixed offsets.

    Agent i gets ``x_i = b_i + offsets`` with ``b_i ~ U[low, high]``; the
    default offsets ``(0, -2)`` give ``y(0) = x(0) - 2`` in two dimensions.
    """
    m = problems.dim
    if offsets is None:
        offsets = np.zeros(m)
        if m >= 2:
            offsets[1] = -2.0
    base = np.random.default_rng(seed).uniform(low, high, size=problems.n)
    return base[:, None] + np.asarray(offsets, dtype=float)[None, :]


# -- trajectory --------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-sampled record of a run; per-sample arrays stack along axis 0."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    grad_sum: np.ndarray       # sum_i grad L_i, (K, m)
    W1: np.ndarray
    consensus_linf: np.ndarray
    edge_l1: np.ndarray
    margins: np.ndarray        # (K, n, q_max), NaN in padding slots
    hess_eig_min: np.ndarray   # (K, n)
    hess_eig_max: np.ndarray
    sgn_sum: np.ndarray        # (K, m) network-wide sum of sign vectors
    time_rate_sups: np.ndarray  # (K, 3): max ||d/dt grad f||, ||d/dt grad g||, |d/dt g|
    beta: float
    n_edges: int
    q: np.ndarray
    steps: int = 0
    halvings: int = 0
    max_abs_sgn_sum: float = 0.0   # over every evaluated stage, not just samples
    max_margin: float = -np.inf    # over every accepted step

    @property
    def phi_max(self):
        return np.max(np.linalg.norm(self.phi, axis=-1), axis=-1)

    @property
    def margin_max(self):
        if self.margins.shape[-1] == 0:
            return np.full(len(self.t), -np.inf)
        return np.nanmax(self.margins.reshape(len(self.t), -1), axis=1)

    def to_csv(self) -> str:
        """One row per agent per sample; floats at full precision."""
        K, n, m = self.x.shape
        qm = self.margins.shape[-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent"] + [f"x_{k + 1}" for k in range(m)] + [f"u_{k + 1}" for k in range(m)]
                   + ["phi_norm"] + [f"margin_{k + 1}" for k in range(qm)] + ["W1", "consensus_linf"])
        pn = np.linalg.norm(self.phi, axis=-1)
        for s in range(K):
            for i in range(n):
                marg = [_fmt(self.margins[s, i, k]) if k < self.q[i] else "" for k in range(qm)]
                w.writerow([_fmt(self.t[s]), i + 1] + [_fmt(v) for v in self.x[s, i]]
                           + [_fmt(v) for v in self.u[s, i]] + [_fmt(pn[s, i])] + marg
                           + [_fmt(self.W1[s]), _fmt(self.consensus_linf[s])])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def consensus_linf(X) -> float:
    """Largest pairwise Euclidean distance between agent states."""
    diff = X[:, None, :] - X[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ija,ija->ij", diff, diff))))


def edge_l1(graph: Graph, X) -> float:
    tail, head = graph.edge_index
    return float(np.sum(np.abs(X[head] - X[tail])))


class _Recorder:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.rows = {k: [] for k in ("t", "x", "u", "phi", "grad_sum", "W1", "consensus_linf", "edge_l1",
                                     "margins", "hess_eig_min", "hess_eig_max", "sgn_sum", "time_rate_sups")}

    def add(self, t, X, ctl: SwarmControl):
        r = self.rows
        gs = ctl.penalized.gradient.sum(axis=0)
        marg = np.where(self.sc.problems.constraint_mask, ctl.con_values - 1.0 / ctl.rho, np.nan)
        mask = self.sc.problems.constraint_mask
        gt = np.linalg.norm(ctl.con_time_gradient, axis=-1)[mask]
        gv = np.abs(ctl.con_time_value)[mask]
        r["t"].append(t)
        r["x"].append(X.copy())
        r["u"].append(ctl.u)
        r["phi"].append(ctl.phi)
        r["grad_sum"].append(gs)
        r["W1"].append(0.5 * float(gs @ gs))
        r["consensus_linf"].append(consensus_linf(X))
        r["edge_l1"].append(edge_l1(self.sc.graph, X))
        r["margins"].append(marg)
        r["hess_eig_min"].append(ctl.hessian_eigs[:, 0])
        r["hess_eig_max"].append(ctl.hessian_eigs[:, -1])
        r["sgn_sum"].append(ctl.sgn_vectors.sum(axis=0))
        r["time_rate_sups"].append([float(np.max(np.linalg.norm(ctl.obj_time_gradient, axis=-1))),
                                    float(gt.max()) if gt.size else 0.0,
                                    float(gv.max()) if gv.size else 0.0])

    def finish(self, **meta) -> Trajectory:
        arrays = {k: np.array(v, dtype=float) for k, v in self.rows.items()}
        return Trajectory(**arrays, beta=float(self.sc.beta), n_edges=self.sc.graph.n_edges,
                          q=self.sc.problems.q.copy(), **meta)


# -- integration -------------------------------------------------------------

class _Integrator:
    """Holds the scenario and the running step statistics."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.cfg = sc.integration
        self.halvings = 0
        self.max_abs_sgn_sum = 0.0
        self.max_margin = -np.inf

    def control(self, t, X) -> SwarmControl:
        sc = self.sc
        ctl = swarm_control(sc.problems, sc.schedule, sc.graph, sc.beta, X, t, self.cfg.smoothing_epsilon)
        self.max_abs_sgn_sum = max(self.max_abs_sgn_sum, float(np.max(np.abs(ctl.sgn_vectors.sum(axis=0)))))
        return ctl

    def _attempt(self, t, X, ctl, dt):
        """One step of the configured scheme; raises DomainViolation on exit."""
        if self.cfg.scheme == "euler":
            X1 = X + dt * ctl.u
        else:
            k1 = ctl.u
            k2 = self.control(t + dt / 2, X + dt / 2 * k1).u
            k3 = self.control(t + dt / 2, X + dt / 2 * k2).u
            k4 = self.control(t + dt, X + dt * k3).u
            X1 = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        # evaluating the control at the new point doubles as the domain check
        return X1, self.control(t + dt, X1)

    def advance(self, t, X, ctl, dt, depth=0):
        try:
            X1, ctl1 = self._attempt(t, X, ctl, dt)
        except DomainViolation as err:
            if depth >= self.cfg.max_halvings:
                raise StepFailure(t, err) from err
            self.halvings += 1
            half = dt / 2
            Xm, ctlm = self.advance(t, X, ctl, half, depth + 1)
            return self.advance(t + half, Xm, ctlm, half, depth + 1)
        marg = ctl1.con_values - 1.0 / ctl1.rho
        if self.sc.problems.q_max:
            self.max_margin = max(self.max_margin, float(np.max(marg[self.sc.problems.constraint_mask])))
        return X1, ctl1


def step(scenario: Scenario, state: SwarmState, dt: float) -> SwarmState:
    """Advance one (feasibility-guarded) step of size ``dt``."""
    it = _Integrator(scenario)
    ctl = it.control(state.t, state.x)
    X1, _ = it.advance(state.t, state.x, ctl, dt)
    return SwarmState(state.t + dt, X1)


def simulate(scenario: Scenario, progress=None) -> Trajectory:
    """Integrate from t=0 to t_end, sampling every ``sample_stride`` steps and at t_end."""
    cfg = scenario.integration
    it = _Integrator(scenario)
    rec = _Recorder(scenario)
    X = np.array(scenario.init, dtype=float)
    n_steps = cfg.n_steps
    ctl = it.control(0.0, X)
    for k in range(n_steps):
        t = k * cfg.dt
        if k % cfg.sample_stride == 0:
            rec.add(t, X, ctl)
            if progress is not None:
                progress(t)
        X, ctl = it.advance(t, X, ctl, cfg.dt)
    rec.add(n_steps * cfg.dt, X, ctl)
    return rec.finish(steps=n_steps, halvings=it.halvings,
                      max_abs_sgn_sum=it.max_abs_sgn_sum, max_margin=it.max_margin)


def worker_count(requested=None) -> int:
    cap = os.environ.get("TVSWARM_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def simulate_many(scenarios, workers=None) -> list:
    """Run independent scenarios, in worker processes when more than one is allowed."""
    scenarios = list(scenarios)
    n = min(worker_count(workers), len(scenarios))
    if n <= 1:
        return [simulate(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(simulate, scenarios))
