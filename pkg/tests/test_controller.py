import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tvswarm.barrier import BarrierSchedule, DomainViolation, combine, in_domain
from tvswarm.controller import (EIG_TOL, SingularHessian, control, gain_audit, gain_bound, phi, sgn, spd_solve,
                                swarm_control)
from tvswarm.graph import Graph
from tvswarm.problem import AgentProblem, ProblemSet, QuadraticTracking, Signal, paper_agent, paper_benchmark

from conftest import three_agent_constrained


def scalar_agent(target=None):
    return AgentProblem(QuadraticTracking(((1.0,),), target or Signal(offset=(0.0,))))


def test_two_scalar_agents_by_substitution():
    # f = x^2 / 2, x1 = 1, x2 = 0, beta = 2: u1 = -2 - 1
    ci = control(scalar_agent(), BarrierSchedule(), 2.0, [1.0], [[0.0]], 0.0)
    assert ci.u[0] == pytest.approx(-3.0, abs=1e-15)
    assert ci.sgn_vector[0] == 1.0
    assert ci.phi[0] == pytest.approx(-1.0)
    assert ci.u[0] == ci.consensus_term[0] + ci.phi[0]


@pytest.mark.parametrize("t", [0.0, 0.7, 2.0, 5.5])
@pytest.mark.parametrize("x", [-1.0, 0.3])
def test_phi_is_feedback_plus_feedforward(t, x):
    agent = scalar_agent(Signal(offset=(0.0,), sin=(1.0,)))
    assert phi(agent, BarrierSchedule(), [x], t)[0] == pytest.approx(-(x - math.sin(t)) + math.cos(t), abs=1e-14)
    assert phi(agent, BarrierSchedule(), [math.sin(t)], t)[0] == pytest.approx(math.cos(t), abs=1e-14)


def test_phi_vanishes_at_a_static_minimizer():
    agent = AgentProblem(QuadraticTracking(((2.0, 0.0), (0.0, 1.0)), Signal(offset=(1.0, -1.0))))
    np.testing.assert_array_equal(phi(agent, BarrierSchedule(), [1.0, -1.0], 3.0), 0.0)


def test_equal_neighbors_give_pure_tracking_term():
    agent = paper_agent(5)
    x = np.array([-0.5, -3.0])
    ci = control(agent, BarrierSchedule(), 25.0, x, [x, x.copy()], 1.2)
    np.testing.assert_array_equal(ci.sgn_vector, 0.0)
    np.testing.assert_array_equal(ci.u, ci.phi)


def test_control_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        control(scalar_agent(), BarrierSchedule(), 0.0, [0.0], [], 0.0)


def test_smoothed_sign_is_a_clipped_ramp():
    z = np.array([-1.0, -5e-4, 0.0, 2.5e-4, 3.0])
    np.testing.assert_allclose(sgn(z, 1e-3), [-1.0, -0.5, 0.0, 0.25, 1.0])
    np.testing.assert_array_equal(sgn(z), [-1.0, -1.0, 0.0, 1.0, 1.0])


def test_singular_hessian_reports_eigenvalue():
    H = np.array([[[1.0, 0.0], [0.0, 1e-12]]])
    with pytest.raises(SingularHessian) as info:
        spd_solve(H, np.ones((1, 2, 1)), agent_ids=[7])
    assert info.value.agent == 7
    assert info.value.min_eig == pytest.approx(1e-12)
    with pytest.raises(SingularHessian):
        spd_solve(np.diag([1.0, 2.0, -1.0]), np.ones((3, 1)))


def test_singular_objective_is_caught_by_the_batched_path():
    flat = AgentProblem(QuadraticTracking(((1.0, 0.0), (0.0, 0.0)), Signal(offset=(0.0, 0.0))))
    g = Graph.from_edge_list(2, [(0, 1)])
    with pytest.raises(SingularHessian) as info:
        swarm_control(ProblemSet((paper_agent(2), flat)), BarrierSchedule(), g, 1.0, np.zeros((2, 2)) - 3.0, 0.0)
    assert info.value.agent == 1


def test_batched_path_reports_domain_exit():
    graph, problems = three_agent_constrained()
    X = np.array([[0.9, 0.0], [0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DomainViolation) as info:
        swarm_control(problems, BarrierSchedule(10.0, 0.5), graph, 1.0, X, 0.0)
    assert (info.value.agent, info.value.constraint) == (0, 0)


def test_gain_bound_is_linear_in_phi_and_zero_without_edges():
    b = gain_bound(1.5, 0.2, 2, 12, 14)
    assert b == pytest.approx(2 * 1.5 * 2 * 144 * 14 / 0.2)
    assert gain_bound(3.0, 0.2, 2, 12, 14) == pytest.approx(2 * b)
    assert gain_bound(1e6, 1e-9, 2, 1, 0) == 0.0


def fake_trajectory(phi_scale=1.0, n_edges=3, beta=25.0):
    phis = np.array([[[0.3, 0.4], [1.0, 0.0], [0.0, 0.0]], [[0.0, 2.0], [0.1, 0.1], [0.0, 0.0]]]) * phi_scale
    return SimpleNamespace(t=np.array([0.0, 1.0]), phi=phis, x=np.zeros((2, 3, 2)),
                           hess_eig_max=np.array([[1.0, 4.0, 2.0], [3.0, 1.0, 1.0]]),
                           n_edges=n_edges, beta=beta)


def test_gain_audit_takes_extremes_over_the_record():
    rep = gain_audit(fake_trajectory())
    assert rep.phi_bar == pytest.approx(2.0)
    assert rep.min_inv_hessian_eig == pytest.approx(0.25)
    assert rep.bound == pytest.approx(2 * 2.0 * 2 * 9 * 3 / 0.25)
    assert not rep.passed
    assert gain_audit(fake_trajectory(phi_scale=2.0)).bound == pytest.approx(2 * rep.bound)
    assert gain_audit(fake_trajectory(n_edges=0, beta=1e-6)).passed
    assert "recorded samples" in rep.as_dict()["note"]


def test_gain_audit_rejects_empty_record():
    tr = fake_trajectory()
    tr.t = np.array([])
    with pytest.raises(ValueError):
        gain_audit(tr)


# -- batched kernel against the reference numpy route ----------------------

def reference_swarm_control(problems, schedule, graph, beta, X, t):
    rho, rho_dot = schedule.evaluate(t)
    pj = combine(problems.objective_jets(X, t), problems.constraint_jets(X, t), rho, rho_dot, t,
                 mask=problems.constraint_mask)
    sv = np.zeros_like(X)
    for i in range(graph.n):
        for j in graph.neighbors(i):
            sv[i] += np.sign(X[i] - X[j])
    rhs = np.stack([-beta * sv, -(pj.gradient + pj.time_gradient)], axis=-1)
    sol, eig = spd_solve(pj.hessian, rhs)
    return pj, sv, sol[..., 0], sol[..., 1], eig


@st.composite
def paper_states(draw):
    """Benchmark states inside every agent's domain, some of them coincident."""
    t = draw(st.floats(0, 20))
    x = np.array(draw(st.lists(st.floats(-8, 3), min_size=12, max_size=12)))
    slack = np.array(draw(st.lists(st.floats(1e-3, 5), min_size=12, max_size=12)))
    # constraints read y <= x + cos t (agents 1-6) and y <= t (agents 7-12)
    y = np.minimum(x + math.cos(t), t) - slack
    X = np.stack([x, y], axis=1)
    for i, j in draw(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=4)):
        X[i] = X[j]
    return t, X


PAPER = paper_benchmark()


@given(paper_states(), st.floats(0.1, 100))
def test_compiled_kernel_matches_numpy_route(state, beta):
    t, X = state
    graph, problems = PAPER
    schedule = BarrierSchedule(100.0, 0.1)
    assume(all(in_domain(a, schedule, X[i], t)[0] for i, a in enumerate(problems.agents)))
    ctl = swarm_control(problems, schedule, graph, beta, X, t)
    pj, sv, cons, ph, eig = reference_swarm_control(problems, schedule, graph, beta, X, t)
    np.testing.assert_array_equal(ctl.sgn_vectors, sv)
    for got, ref in ((ctl.penalized.gradient, pj.gradient), (ctl.penalized.hessian, pj.hessian),
                     (ctl.penalized.time_gradient, pj.time_gradient), (ctl.phi, ph), (ctl.consensus_term, cons),
                     (ctl.hessian_eigs, eig)):
        np.testing.assert_allclose(got, ref, rtol=1e-11, atol=1e-11 * (1 + np.max(np.abs(ref))))
    np.testing.assert_allclose(ctl.penalized.value, pj.value, rtol=1e-13, atol=1e-12)
    np.testing.assert_array_equal(ctl.u, ctl.consensus_term + ctl.phi)


@given(paper_states())
def test_network_sign_sum_cancels_exactly(state):
    t, X = state
    graph, problems = PAPER
    schedule = BarrierSchedule(100.0, 0.1)
    assume(all(in_domain(a, schedule, X[i], t)[0] for i, a in enumerate(problems.agents)))
    ctl = swarm_control(problems, schedule, graph, 25.0, X, t)
    assert np.all(ctl.sgn_vectors.sum(axis=0) == 0)
    deg = graph.degree()[:, None]
    assert np.all(np.abs(ctl.sgn_vectors) <= deg)
    assert np.all(ctl.sgn_vectors == np.round(ctl.sgn_vectors))


@given(paper_states())
def test_phi_solve_residual(state):
    t, X = state
    graph, problems = PAPER
    schedule = BarrierSchedule(100.0, 0.1)
    assume(all(in_domain(a, schedule, X[i], t)[0] for i, a in enumerate(problems.agents)))
    ctl = swarm_control(problems, schedule, graph, 25.0, X, t)
    pj = ctl.penalized
    for i in range(problems.n):
        r = pj.hessian[i] @ ctl.phi[i] + pj.gradient[i] + pj.time_gradient[i]
        assert np.linalg.norm(r) <= 1e-10 * (1 + np.linalg.norm(pj.gradient[i]) + np.linalg.norm(pj.time_gradient[i]))


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_spd_solve_matches_dense_solver(m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, m, m))
    H = A @ A.transpose(0, 2, 1) + 0.5 * np.eye(m)
    B = rng.normal(size=(4, m, 2))
    X, eig = spd_solve(H, B)
    np.testing.assert_allclose(X, np.linalg.solve(H, B), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(eig, np.linalg.eigvalsh(H), rtol=1e-9, atol=1e-12)
    assert np.all(eig[..., 0] > EIG_TOL)


def test_single_call_control_agrees_with_batched(paper):
    graph, problems = paper
    rng = np.random.default_rng(4)
    X = rng.uniform(-9, -1, size=(12, 1)) + np.array([[0.0, -2.0]])
    t = 0.4
    schedule = BarrierSchedule(100.0, 0.1)
    ctl = swarm_control(problems, schedule, graph, 25.0, X, t)
    for i, agent in enumerate(problems.agents):
        ci = control(agent, schedule, 25.0, X[i], [X[j] for j in graph.neighbors(i)], t)
        np.testing.assert_allclose(ci.u, ctl.u[i], rtol=1e-11, atol=1e-11)
        np.testing.assert_array_equal(ci.sgn_vector, ctl.sgn_vectors[i])
