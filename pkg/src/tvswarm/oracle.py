"""Centralized reference solutions for the team problem.

* ``minimize_penalized`` -- the minimizer of sum_i L_i(y, t) at the schedule's
  barrier parameter (what the agents converge to when they agree).
* ``kkt_optimum`` -- the constrained optimum y*(t) by a warm-started barrier
  homotopy, with multiplier estimates ``nu_j = 1 / (1 - rho g_j)``.
* ``gap_bounds`` -- the barrier and multiplier suboptimality bounds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from tvswarm.barrier import BarrierSchedule, DomainViolation, combine
from tvswarm.problem import AgentProblem, ProblemSet, ShiftedField

HOMOTOPY = (1e2, 1e4, 1e6, 1e8)


class InfeasibleStart(RuntimeError):
    pass


class OracleError(RuntimeError):
    """The barrier homotopy did not reach the requested accuracy."""

    def __init__(self, msg, residuals=None):
        self.residuals = residuals or {}
        super().__init__(f"{msg} {self.residuals}" if residuals else msg)


@dataclass
class NewtonResult:
    y: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


@dataclass
class OptimumReport:
    t: float
    y_star: np.ndarray
    multipliers: np.ndarray        # (n, q_max) barrier-weight estimates, 0 in padding
    multiplier_totals: list        # [(constraint config, total nu, [(agent, slot), ...])]
    stationarity: float
    complementarity: float
    y_tilde: np.ndarray | None = None
    rho: float = float("nan")
    objective_gap: float = float("nan")
    barrier_bound: float = float("nan")
    kkt_bound: float = float("nan")
    y_hat: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def bound(self):
        return self.barrier_bound + self.kkt_bound

    @property
    def multiplier_mass(self) -> float:
        return float(self.multipliers.sum())


# -- penalized team objective -------------------------------------------------

def _team(problems: ProblemSet, y, t, rho):
    """Value, gradient and Hessian of sum_i L_i(y, t) at fixed rho."""
    X = np.broadcast_to(np.asarray(y, dtype=float), (problems.n, problems.dim))
    obj = problems.objective_jets(X, t)
    con = problems.constraint_jets(X, t)
    pj = combine(obj, con, rho, 0.0, t, mask=problems.constraint_mask)
    return float(pj.value.sum()), pj.gradient.sum(axis=0), pj.hessian.sum(axis=0)


def constraint_values(problems: ProblemSet, y, t):
    X = np.broadcast_to(np.asarray(y, dtype=float), (problems.n, problems.dim))
    g = problems.constraint_jets(X, t).value
    return g[problems.constraint_mask]


def strictly_inside(problems, y, t, rho) -> bool:
    g = constraint_values(problems, y, t)
    return bool(np.all(g - 1.0 / rho < 0) and np.all(1.0 - rho * g > 0))


def barrier_newton(problems: ProblemSet, rho, t, y0, tol=1e-10, max_iter=200) -> NewtonResult:
    """Damped Newton on sum_i L_i(., t); trial points outside the domain are rejected."""
    y = np.array(y0, dtype=float)
    val, grad, hess = _team(problems, y, t, rho)
    gn = float(np.linalg.norm(grad))
    it = 0
    while gn > tol and it < max_iter:
        it += 1
        step = -np.linalg.solve(hess, grad)
        slope = float(grad @ step)
        alpha = 1.0
        while True:
            try:
                tv, tg, th = _team(problems, y + alpha * step, t, rho)
                if tv <= val + 1e-4 * alpha * slope or np.linalg.norm(tg) < gn:
                    break
            except DomainViolation:
                pass
            alpha *= 0.5
            if alpha < 1e-16:
                return NewtonResult(y, gn, it, False)
        if alpha * np.linalg.norm(step) <= 1e-15 * (1.0 + np.linalg.norm(y)):
            return NewtonResult(y, gn, it, False)
        y = y + alpha * step
        val, grad, hess = _team(problems, y, t, rho)
        gn = float(np.linalg.norm(grad))
    return NewtonResult(y, gn, it, gn <= tol)


def strictly_feasible_point(problems: ProblemSet, t, y0=None, target=-1e-3):
    """A point with every constraint strictly negative (phase I), or InfeasibleStart."""
    m = problems.dim
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    if problems.q_max == 0:
        return y0
    g0 = constraint_values(problems, y0, t)
    if np.max(g0) < target:
        return y0
    mask = problems.constraint_mask

    def cons(z):
        return z[-1] - constraint_values(problems, z[:-1], t)

    def cons_jac(z):
        X = np.broadcast_to(z[:-1], (problems.n, m))
        grads = problems.constraint_jets(X, t).gradient[mask]
        return np.hstack([-grads, np.ones((grads.shape[0], 1))])

    z0 = np.append(y0, np.max(g0) + 1.0)
    res = minimize(lambda z: z[-1], z0, jac=lambda z: np.eye(m + 1)[-1], method="SLSQP",
                   constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                   bounds=[(None, None)] * m + [(-1.0, None)], options={"maxiter": 500, "ftol": 1e-12})
    y = res.x[:-1]
    if np.max(constraint_values(problems, y, t)) >= 0:
        raise InfeasibleStart(f"no strictly feasible point found at t={t} (min max g = {res.x[-1]:.3g})")
    return y


def _pull_inside(problems, y, anchor, t, rho):
    """Shrink ``y`` toward a strictly feasible anchor until it is inside the rho-domain."""
    s = 1.0
    while not strictly_inside(problems, anchor + s * (y - anchor), t, rho):
        s *= 0.5
        if s < 1e-30:
            return np.array(anchor)
    return anchor + s * (y - anchor)


def minimize_penalized(problems: ProblemSet, schedule: BarrierSchedule, t, x0=None, tol=1e-10,
                       max_iter=200) -> np.ndarray:
    return penalized_optimum(problems, schedule.rho(t), t, x0, tol, max_iter).y


def penalized_optimum(problems: ProblemSet, rho, t, x0=None, tol=1e-10, max_iter=200) -> NewtonResult:
    if x0 is None or not strictly_inside(problems, x0, t, rho):
        anchor = strictly_feasible_point(problems, t, x0)
        x0 = anchor if x0 is None else _pull_inside(problems, np.asarray(x0, dtype=float), anchor, t, rho)
    return barrier_newton(problems, rho, t, x0, tol, max_iter)


# -- KKT point by homotopy ---------------------------------------------------

def multiplier_estimates(problems: ProblemSet, y, t, rho):
    X = np.broadcast_to(np.asarray(y, dtype=float), (problems.n, problems.dim))
    g = problems.constraint_jets(X, t).value
    return np.where(problems.constraint_mask, 1.0 / (1.0 - rho * g), 0.0), g


def _group_jets(problems: ProblemSet, groups, y, t):
    """Value, gradient, Hessian of one representative per distinct constraint."""
    X = np.broadcast_to(np.asarray(y, dtype=float), (problems.n, problems.dim))
    con = problems.constraint_jets(X, t)
    idx = tuple(np.array([members[0][k] for _, members in groups], dtype=int) for k in (0, 1))
    return con.value[idx], con.gradient[idx], con.hessian[idx]


def active_set_polish(problems: ProblemSet, t, y, group_nu, tol=1e-13, max_iter=50):
    """Newton on the equality-constrained KKT system of the constraints judged active.

    ``group_nu`` holds the barrier multiplier estimate summed over each group of
    identical constraints.  Returns ``(y, group_lambda)`` or None when the system
    is singular, does not converge, or yields a negative multiplier.
    """
    groups = problems.distinct_constraints()
    if not groups:
        return None
    g0, _, _ = _group_jets(problems, groups, y, t)
    active = np.flatnonzero((g0 > -1e-6) | (np.asarray(group_nu) > 1e-4))
    m = problems.dim
    lam = np.asarray(group_nu, dtype=float)[active].copy()
    y = np.array(y, dtype=float)
    X = lambda z: np.broadcast_to(z, (problems.n, m))
    for _ in range(max_iter):
        obj = problems.objective_jets(X(y), t)
        g, dg, d2g = _group_jets(problems, groups, y, t)
        g, dg, d2g = g[active], dg[active], d2g[active]
        r = np.concatenate([obj.gradient.sum(axis=0) + lam @ dg, g])
        if np.max(np.abs(r), initial=0.0) <= tol:
            break
        k = len(active)
        K = np.zeros((m + k, m + k))
        K[:m, :m] = obj.hessian.sum(axis=0) + np.einsum("k,kab->ab", lam, d2g)
        K[:m, m:] = dg.T
        K[m:, :m] = dg
        try:
            step = np.linalg.solve(K, -r)
        except np.linalg.LinAlgError:
            return None
        y = y + step[:m]
        lam = lam + step[m:]
    else:
        return None
    if np.any(lam < -1e-9):
        return None
    out = np.zeros(len(groups))
    out[active] = np.maximum(lam, 0.0)
    g_all, _, _ = _group_jets(problems, groups, y, t)
    if np.any(g_all > 1e-9):
        return None
    return y, out


def _kkt_residuals(problems: ProblemSet, y, t, nu):
    X = np.broadcast_to(y, (problems.n, problems.dim))
    grad_f = problems.objective_jets(X, t).gradient.sum(axis=0)
    con = problems.constraint_jets(X, t)
    stationarity = float(np.linalg.norm(grad_f + np.einsum("iq,iqa->a", nu, con.gradient)))
    compl = float(np.max(np.abs(nu * con.value)[problems.constraint_mask], initial=0.0))
    return stationarity, compl


def kkt_optimum(problems: ProblemSet, t, y0=None, ladder=HOMOTOPY, residual_tol=1e-6) -> OptimumReport:
    """Constrained team optimum by a warm-started barrier homotopy over ``ladder``.

    The last barrier iterate fixes the active set; an equality-constrained Newton
    polish then removes the rounding floor of the large-rho barrier.  Multipliers
    of identical constraints held by several agents are split evenly.
    """
    anchor = strictly_feasible_point(problems, t, y0)
    y = anchor if y0 is None else np.asarray(y0, dtype=float)
    res = None
    for rho in ladder:
        if not strictly_inside(problems, y, t, rho):
            y = _pull_inside(problems, y, anchor, t, rho)
        res = barrier_newton(problems, rho, t, y)
        y = res.y
    nu, _ = multiplier_estimates(problems, y, t, ladder[-1])
    groups = problems.distinct_constraints()
    flags = []
    polished = active_set_polish(problems, t, y, [sum(nu[i, j] for i, j in mem) for _, mem in groups])
    if polished is not None:
        y_pol, lam = polished
        nu_pol = np.zeros_like(nu)
        for (_, mem), total in zip(groups, lam):
            for i, j in mem:
                nu_pol[i, j] = total / len(mem)
        if _kkt_residuals(problems, y_pol, t, nu_pol)[0] <= _kkt_residuals(problems, y, t, nu)[0]:
            y, nu = y_pol, nu_pol
            flags.append("polished")
    stationarity, compl = _kkt_residuals(problems, y, t, nu)
    totals = [(cfg, float(sum(nu[i, j] for i, j in members)), members) for cfg, members in groups]
    report = OptimumReport(t, y, nu, totals, stationarity, compl, flags=flags)
    if stationarity > residual_tol:
        raise OracleError(f"barrier homotopy did not converge at t={t}",
                          {"stationarity": stationarity, "newton_grad_norm": res.grad_norm,
                           "iterations": res.iterations})
    return report


def relaxed_problems(problems: ProblemSet, rho) -> ProblemSet:
    """Same problem with every constraint loosened to ``g_j <= 1/rho``."""
    return ProblemSet(tuple(AgentProblem(a.objective, tuple(ShiftedField(g, 1.0 / rho) for g in a.constraints))
                            for a in problems.agents))


def relaxed_optimum(problems: ProblemSet, t, rho, y0=None) -> np.ndarray:
    return kkt_optimum(relaxed_problems(problems, rho), t, y0).y_star


def gap_bounds(problems: ProblemSet, rho, multipliers) -> tuple[float, float]:
    """``(sum_j q_j / rho, sum nu / rho)``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    nu = np.asarray(multipliers, dtype=float)
    if np.any(nu < 0):
        raise ValueError("multipliers must be nonnegative")
    return float(problems.q.sum()) / rho, float(nu.sum()) / rho


def oracle_grid(problems: ProblemSet, schedule: BarrierSchedule, times, with_relaxed=False,
                strict=True) -> list:
    """Reports at each time, each solve warm-started from the previous sample.

    With ``strict=False`` an unsolved sample becomes a NaN report flagged
    ``"unsolved"`` instead of raising.
    """
    out = []
    y_prev = yt_prev = None
    m = problems.dim
    for t in times:
        t = float(t)
        try:
            rep = kkt_optimum(problems, t, y_prev)
        except OracleError as err:
            if strict:
                raise
            nan = np.full(m, np.nan)
            out.append(OptimumReport(t, nan, np.full((problems.n, problems.q_max), np.nan), [], np.nan, np.nan,
                                     y_tilde=nan, flags=["unsolved", str(err)]))
            continue
        rho = schedule.rho(t)
        yt = penalized_optimum(problems, rho, t, yt_prev).y
        rep.y_tilde = yt
        rep.rho = rho
        rep.objective_gap = problems.total_objective(yt, t) - problems.total_objective(rep.y_star, t)
        rep.barrier_bound, rep.kkt_bound = gap_bounds(problems, rho, rep.multipliers)
        if with_relaxed:
            rep.y_hat = relaxed_optimum(problems, t, rho, rep.y_star)
        out.append(rep)
        y_prev, yt_prev = rep.y_star, yt
    return out


def grid_times(t_end, interval=0.1):
    """0, interval, ..., t_end computed as integer multiples (no accumulation drift)."""
    k = int(round(t_end / interval))
    return np.arange(k + 1) * interval


def oracle_csv(reports) -> str:
    m = len(reports[0].y_star) if reports else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"ystar_{k + 1}" for k in range(m)] + [f"ytilde_{k + 1}" for k in range(m)]
               + ["gap", "barrier_bound", "kkt_bound"])
    for r in reports:
        yt = r.y_tilde if r.y_tilde is not None else np.full(m, np.nan)
        w.writerow([repr(float(r.t))] + [repr(float(v)) for v in r.y_star] + [repr(float(v)) for v in yt]
                   + [repr(float(r.objective_gap)), repr(float(r.barrier_bound)), repr(float(r.kkt_bound))])
    return buf.getvalue()
