"""Distributed tracking of time-varying constrained optima over agent networks.

Sliding-mode consensus with a Hessian-scaled gain, a log-barrier penalized
Newton tracking term, a centralized reference oracle, and runtime checks of
the convergence claims on simulated trajectories.
"""

from tvswarm.barrier import BarrierSchedule, DomainViolation, in_domain, penalized_jet
from tvswarm.controller import ControlInput, control, gain_audit, phi
from tvswarm.graph import Graph
from tvswarm.oracle import gap_bounds, kkt_optimum, minimize_penalized, oracle_grid
from tvswarm.problem import AgentProblem, Jet, ProblemSet, check_jet, paper_benchmark
from tvswarm.simulator import IntegrationConfig, Scenario, SwarmState, Trajectory, simulate, step

__version__ = "0.1.0"

__all__ = [
    "AgentProblem",
    "BarrierSchedule",
    "ControlInput",
    "DomainViolation",
    "Graph",
    "IntegrationConfig",
    "Jet",
    "ProblemSet",
    "Scenario",
    "SwarmState",
    "Trajectory",
    "check_jet",
    "control",
    "gain_audit",
    "gap_bounds",
    "in_domain",
    "kkt_optimum",
    "minimize_penalized",
    "oracle_grid",
    "paper_benchmark",
    "penalized_jet",
    "phi",
    "simulate",
    "step",
]
