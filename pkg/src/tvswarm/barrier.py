"""Log-barrier penalized local objectives with a growing barrier parameter.

For agent i with objective f and constraints g_j the penalized objective is

    L(x, t) = f(x, t) - (1/rho(t)) * sum_j log(1 - rho(t) g_j(x, t)),

defined on the relaxed domain ``g_j < 1/rho``.  With ``s_j = 1 - rho g_j``:

    grad L    = grad f + sum_j grad g_j / s_j
    d/dt grad = d/dt grad f + sum_j (d/dt grad g_j) / s_j
                + sum_j rho_dot g_j grad g_j / s_j^2
                + sum_j rho grad g_j (d/dt g_j) / s_j^2
    hess L    = hess f + sum_j hess g_j / s_j + sum_j rho grad g_j grad g_j^T / s_j^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tvswarm.problem import AgentProblem, Jet


class DomainViolation(ValueError):
    """A state left the barrier domain ``g_j(x, t) < 1/rho(t)``."""

    def __init__(self, margin, t, agent=None, constraint=None):
        self.margin = float(margin)
        self.t = float(t)
        self.agent = agent
        self.constraint = constraint
        who = f"agent {agent}, " if agent is not None else ""
        super().__init__(f"{who}constraint {constraint}: margin g - 1/rho = {self.margin:.6g} >= 0 at t={self.t:.6g}")


@dataclass(frozen=True)
class BarrierSchedule:
    """``rho(t) = a1 * exp(a2 * t)``, clamped at ``rho_max``."""

    a1: float = 100.0
    a2: float = 0.1
    rho_max: float = 1e12

    def __post_init__(self):
        if not self.a1 > 0:
            raise ValueError(f"a1 must be positive, got {self.a1}")
        if not self.a2 > 0:
            raise ValueError(f"a2 must be positive, got {self.a2}")
        if not self.rho_max >= self.a1:
            raise ValueError(f"rho_max={self.rho_max} must be >= a1={self.a1}")

    def evaluate(self, t: float) -> tuple[float, float]:
        """Return ``(rho, rho_dot)``; the rate is 0 once the clamp is active."""
        if math.log(self.a1) + self.a2 * t >= math.log(self.rho_max):
            return self.rho_max, 0.0
        rho = self.a1 * math.exp(self.a2 * t)
        return rho, self.a2 * rho

    def rho(self, t: float) -> float:
        return self.evaluate(t)[0]

    def rho_dot(self, t: float) -> float:
        return self.evaluate(t)[1]


@dataclass
class PenalizedJet:
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    time_gradient: np.ndarray


def margins(con_values, rho):
    """``g_j - 1/rho``; negative means strictly inside the barrier domain."""
    return np.asarray(con_values) - 1.0 / rho


def combine(obj: Jet, con: Jet, rho: float, rho_dot: float, t: float = float("nan"),
            mask=None, agent_ids=None) -> PenalizedJet:
    """Penalized jet from objective jets ``(...)`` and constraint jets ``(..., q)``.

    Raises DomainViolation for the worst offending (masked) constraint.
    """
    g = con.value
    s = 1.0 - rho * g
    bad = (margins(g, rho) >= 0) | (s <= 0)
    if mask is not None:
        bad &= mask
    if np.any(bad):
        marg = np.where(bad, margins(g, rho), -np.inf)
        idx = np.unravel_index(np.argmax(marg), marg.shape)
        agent = idx[0] if len(idx) > 1 else None
        if agent is not None and agent_ids is not None:
            agent = agent_ids[agent]
        raise DomainViolation(marg[idx], t, agent=agent, constraint=int(idx[-1]))
    inv = 1.0 / s
    inv2 = inv * inv
    dg = con.gradient
    value = obj.value - np.sum(np.log1p(-rho * g), axis=-1) / rho
    gradient = obj.gradient + np.sum(inv[..., None] * dg, axis=-2)
    outer = dg[..., :, None] * dg[..., None, :]
    hessian = obj.hessian + np.sum(inv[..., None, None] * con.hessian + (rho * inv2)[..., None, None] * outer, axis=-3)
    coef = inv2 * (rho_dot * g + rho * con.time_value)
    time_gradient = (obj.time_gradient + np.sum(inv[..., None] * con.time_gradient, axis=-2)
                     + np.sum(coef[..., None] * dg, axis=-2))
    return PenalizedJet(value, gradient, hessian, time_gradient)


def penalized_jet(agent: AgentProblem, schedule: BarrierSchedule, x, t) -> PenalizedJet:
    obj = agent.objective.jet(x, t)
    if not agent.constraints:
        return PenalizedJet(obj.value, obj.gradient, obj.hessian, obj.time_gradient)
    rho, rho_dot = schedule.evaluate(t)
    return combine(obj, agent.constraint_jets(x, t), rho, rho_dot, t)


def in_domain(agent: AgentProblem, schedule: BarrierSchedule, x, t):
    """``(inside, margins)`` with ``margins_j = g_j(x, t) - 1/rho(t)``."""
    marg = margins(agent.constraint_jets(x, t).value, schedule.rho(t))
    return bool(np.all(marg < 0)), marg


def check_penalized(agent: AgentProblem, schedule: BarrierSchedule, x, t, h=1e-3):
    """Finite-difference audit of ``penalized_jet`` (gradient, Hessian, time rate of the gradient).

    Five-point stencil.  The spatial step shrinks like ``s / sqrt(rho)`` near the
    barrier (``s = 1 - rho g``) so every probe stays in the domain and truncation
    stays small against the barrier curvature.  The time step scales with
    ``s / max(|ds/dt|, rho)`` instead; shrinking it further would let the
    rounding error in ``g`` dominate the quotient.
    """
    from tvswarm.problem import DiscrepancyReport, central_differences, scaled_error

    x = np.asarray(x, dtype=float)
    h_time = h
    if agent.constraints:
        rho, rho_dot = schedule.evaluate(t)
        con = agent.constraint_jets(x, t)
        s = 1.0 - rho * con.value
        drift = np.abs(rho_dot * con.value + rho * con.time_value)
        h_time = h * min(1.0, 10.0 * float(np.min(s / np.maximum(drift, rho))))
        h = h * min(1.0, 0.1 * float(np.min(s)) / math.sqrt(rho))
    jet = penalized_jet(agent, schedule, x, t)
    grad, hess, tgrad, _ = central_differences(lambda z, s: penalized_jet(agent, schedule, z, s), x, t, h,
                                               order=4, h_time=h_time)
    return DiscrepancyReport({
        "gradient": scaled_error(jet.gradient, grad),
        "hessian": scaled_error(jet.hessian, hess),
        "time_gradient": scaled_error(jet.time_gradient, tgrad),
    })


def feasible_samples(agent: AgentProblem, rng, count, t_range=(0.0, 20.0), box=10.0, max_tries=100000):
    """``count`` pairs ``(x, t)`` drawn uniformly with every constraint strictly negative."""
    out = []
    m = agent.dim
    for _ in range(max_tries):
        t = float(rng.uniform(*t_range))
        x = rng.uniform(-box, box, size=m)
        if not agent.constraints or np.all(agent.constraint_jets(x, t).value < 0):
            out.append((x, t))
            if len(out) == count:
                return out
    raise RuntimeError(f"found only {len(out)} feasible samples in {max_tries} draws")


def audit_derivatives(problems, schedule: BarrierSchedule, samples=100, seed=0, t_range=(0.0, 20.0)):
    """Check field jets and penalized jets at ``samples`` feasible points, agents taken in turn."""
    from tvswarm.problem import DiscrepancyReport, check_jet

    rng = np.random.default_rng(seed)
    report = DiscrepancyReport()
    n = len(problems.agents)
    for k in range(samples):
        agent = problems.agents[k % n]
        (x, t), = feasible_samples(agent, rng, 1, t_range)
        for f in (agent.objective,) + tuple(agent.constraints):
            report.merge(DiscrepancyReport({f"{f.kind}.{key}": v for key, v in check_jet(f, x, t).errors.items()}))
        report.merge(DiscrepancyReport({f"penalized.{key}": v
                                        for key, v in check_penalized(agent, schedule, x, t).errors.items()}))
    return report
