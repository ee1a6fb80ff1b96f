"""Sliding-mode consensus plus Hessian-based tracking control law.

Agent i applies

    u_i = H_i^{-1} ( -beta * sum_{j in N_i} sgn(x_i - x_j) - (grad L_i + d/dt grad L_i) )

where ``H_i`` is the penalized Hessian.  The second part is ``phi_i``.  The
signum uses the selection sgn(0) = 0, which makes the network-wide sum of
sign vectors cancel exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tvswarm import _kernels
from tvswarm.barrier import BarrierSchedule, DomainViolation, PenalizedJet, penalized_jet
from tvswarm.graph import Graph
from tvswarm.problem import AgentProblem, ProblemSet

EIG_TOL = 1e-10


class SingularHessian(np.linalg.LinAlgError):
    def __init__(self, min_eig, agent=None):
        self.min_eig = float(min_eig)
        self.agent = agent
        who = f" of agent {agent}" if agent is not None else ""
        super().__init__(f"penalized Hessian{who} not positive definite (min eigenvalue {self.min_eig:.3g})")


def spd_solve(H, B, agent_ids=None):
    """Solve ``H X = B`` for stacked symmetric positive definite ``H``.

    Returns the solution and the eigenvalues of ``H`` (ascending).  Raises
    SingularHessian when the smallest eigenvalue is at or below ``EIG_TOL``.
    """
    if H.shape[-1] == 2:
        return _spd_solve_2x2(H, B, agent_ids)
    eig = np.linalg.eigvalsh(H)
    lo = eig[..., 0]
    if np.any(lo <= EIG_TOL):
        k = int(np.argmin(lo)) if np.ndim(lo) else None
        raise SingularHessian(np.min(lo), agent=k if agent_ids is None or k is None else agent_ids[k])
    return np.linalg.solve(H, B), eig


def _spd_solve_2x2(H, B, agent_ids=None):
    a, b, d = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
    half_tr = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    hi = half_tr + rad
    # det / hi avoids cancellation in half_tr - rad when H is ill conditioned
    det = a * d - b * b
    lo = np.where(hi > 0, det / np.where(hi > 0, hi, 1.0), half_tr - rad)
    if np.any(lo <= EIG_TOL):
        k = int(np.argmin(lo)) if np.ndim(lo) else None
        raise SingularHessian(np.min(lo), agent=k if agent_ids is None or k is None else agent_ids[k])
    b0, b1 = B[..., 0, :], B[..., 1, :]
    inv_det = (1.0 / det)[..., None]
    X = np.empty(np.broadcast_shapes(H.shape[:-2] + (2,) + B.shape[-1:], B.shape))
    X[..., 0, :] = (d[..., None] * b0 - b[..., None] * b1) * inv_det
    X[..., 1, :] = (a[..., None] * b1 - b[..., None] * b0) * inv_det
    eig = np.empty(H.shape[:-1])
    eig[..., 0], eig[..., 1] = lo, hi
    return X, eig


def sgn(z, epsilon=0.0):
    """Componentwise signum with sgn(0) = 0, or a saturation ramp when ``epsilon > 0``."""
    if epsilon > 0:
        return np.clip(np.asarray(z) / epsilon, -1.0, 1.0)
    return np.sign(z)


@dataclass
class ControlInput:
    u: np.ndarray
    phi: np.ndarray
    consensus_term: np.ndarray
    sgn_vector: np.ndarray
    hessian_eigs: np.ndarray = field(default=None, repr=False)


def phi(agent: AgentProblem, schedule: BarrierSchedule, x, t) -> np.ndarray:
    pj = penalized_jet(agent, schedule, x, t)
    rhs = -(pj.gradient + pj.time_gradient)
    sol, _ = spd_solve(pj.hessian, rhs[:, None])
    return sol[:, 0]


def control(agent: AgentProblem, schedule: BarrierSchedule, beta, x_i, neighbor_states, t,
            epsilon=0.0) -> ControlInput:
    if not beta > 0:
        raise ValueError("beta must be positive")
    x_i = np.asarray(x_i, dtype=float)
    pj = penalized_jet(agent, schedule, x_i, t)
    sv = np.zeros_like(x_i)
    for xj in neighbor_states:
        sv = sv + sgn(x_i - np.asarray(xj, dtype=float), epsilon)
    rhs = np.stack([-beta * sv, -(pj.gradient + pj.time_gradient)], axis=1)
    sol, eig = spd_solve(pj.hessian, rhs)
    c, p = sol[:, 0], sol[:, 1]
    return ControlInput(c + p, p, c, sv, eig)


@dataclass
class SwarmControl:
    """Control of every agent at one (t, X), plus the jets it was built from."""

    u: np.ndarray            # (n, m)
    phi: np.ndarray          # (n, m)
    consensus_term: np.ndarray
    sgn_vectors: np.ndarray  # (n, m)
    penalized: PenalizedJet  # batched over agents
    hessian_eigs: np.ndarray  # (n, m) ascending
    con_values: np.ndarray   # (n, q_max), zero padded
    rho: float
    obj_time_gradient: np.ndarray
    con_time_gradient: np.ndarray
    con_time_value: np.ndarray


def swarm_control(problems: ProblemSet, schedule: BarrierSchedule, graph: Graph, beta, X, t,
                  epsilon=0.0) -> SwarmControl:
    """Evaluate the control law for all agents from one state snapshot."""
    rho, rho_dot = schedule.evaluate(t)
    obj = problems.objective_jets(X, t)
    con = problems.constraint_jets(X, t)
    D = graph.incidence
    # D @ sgn(D^T X): row i is sum_{j in N_i} sgn(x_i - x_j); integer sums are exact
    sv = D @ sgn(D.T @ X, epsilon) if graph.n_edges else np.zeros_like(X)
    c = np.ascontiguousarray
    status, where, val, grad, hess, tgrad, cons, ph, eig = _kernels.penalized_solve(
        c(obj.value, dtype=float), c(obj.gradient, dtype=float), c(obj.hessian, dtype=float),
        c(obj.time_gradient, dtype=float), c(con.value, dtype=float), c(con.gradient, dtype=float),
        c(con.hessian, dtype=float), c(con.time_gradient, dtype=float), c(con.time_value, dtype=float),
        c(problems.constraint_mask), float(rho), float(rho_dot), c(sv, dtype=float), float(beta), EIG_TOL)
    if status == _kernels.DOMAIN:
        i, j = divmod(where, con.value.shape[1])
        raise DomainViolation(con.value[i, j] - 1.0 / rho, t, agent=i, constraint=j)
    if status == _kernels.SINGULAR:
        raise SingularHessian(eig[where, 0], agent=where)
    pj = PenalizedJet(val, grad, hess, tgrad)
    return SwarmControl(cons + ph, ph, cons, sv, pj, eig, con.value, rho,
                        obj.time_gradient, con.time_gradient, con.time_value)


@dataclass
class GainReport:
    phi_bar: float
    min_inv_hessian_eig: float
    bound: float
    beta: float
    passed: bool
    note: str = ("phi_bar and the inverse-Hessian eigenvalue are taken as max/min over all "
                 "recorded samples and agents of the trajectory")

    def as_dict(self):
        return dict(self.__dict__)


def gain_bound(phi_bar, min_inv_hessian_eig, m, n, n_edges):
    """Sufficient consensus gain ``2 phi_bar m n^2 |E| / min lambda_min(H^{-1})``."""
    if n_edges == 0:
        return 0.0
    return 2.0 * phi_bar * m * n**2 * n_edges / min_inv_hessian_eig


def gain_audit(trajectory) -> GainReport:
    """A posteriori check of the consensus gain condition on a recorded run."""
    if len(trajectory.t) == 0:
        raise ValueError("empty trajectory")
    phi_bar = float(np.max(np.linalg.norm(trajectory.phi, axis=-1)))
    lam = float(1.0 / np.max(trajectory.hess_eig_max))
    n, m = trajectory.x.shape[1:]
    bound = gain_bound(phi_bar, lam, m, n, trajectory.n_edges)
    return GainReport(phi_bar, lam, bound, trajectory.beta, trajectory.beta > bound)
