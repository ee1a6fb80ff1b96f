import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvswarm.barrier import BarrierSchedule
from tvswarm.graph import Graph
from tvswarm.metrics import w1_decay_fit
from tvswarm.oracle import kkt_optimum
from tvswarm.problem import AffineConstraint, AgentProblem, ProblemSet, QuadraticTracking, Signal
from tvswarm.simulator import (IntegrationConfig, Scenario, ScenarioError, StepFailure, SwarmState, random_init,
                               simulate, simulate_many, step)

from conftest import paper_run, paper_scenario, small_scenario, three_agent_constrained


def single_agent(target, x0, **integration):
    problems = ProblemSet((AgentProblem(QuadraticTracking(((1.0,),), target)),))
    return Scenario(Graph.from_edge_list(1, []), problems, BarrierSchedule(), 1.0, np.array([[x0]]),
                    IntegrationConfig(**integration))


def test_zero_horizon_gives_one_record():
    tr = simulate(small_scenario(t_end=0.0))
    assert len(tr.t) == 1 and tr.t[0] == 0.0
    np.testing.assert_array_equal(tr.x[0], small_scenario().init)


def test_scalar_tracking_matches_the_closed_form():
    # x' = -(x - sin t) + cos t from x(0) = 0 gives x(t) = sin t exactly
    sc = single_agent(Signal(offset=(0.0,), sin=(1.0,)), 0.0, dt=1e-3, t_end=5.0, sample_stride=100)
    tr = simulate(sc)
    assert tr.t[-1] == pytest.approx(5.0)
    assert abs(tr.x[-1, 0, 0] - math.sin(5.0)) <= 5e-3


def test_scalar_offset_decays_exponentially():
    # starting off the target by 1: x(t) - sin t = e^{-t}
    sc = single_agent(Signal(offset=(0.0,), sin=(1.0,)), 1.0, dt=1e-4, t_end=2.0, sample_stride=1000,
                      scheme="rk4")
    tr = simulate(sc)
    np.testing.assert_allclose(tr.x[:, 0, 0] - np.sin(tr.t), np.exp(-tr.t), atol=1e-6)


@pytest.mark.parametrize("x0", [-7.0, 0.2, 4.5])
def test_single_agent_w1_slope(x0):
    sc = single_agent(Signal(offset=(1.0,), cos=(2.0,)), x0, dt=1e-4, t_end=5.0, sample_stride=100)
    assert w1_decay_fit(simulate(sc)) == pytest.approx(-2.0, rel=0.01)


def test_equilibrium_is_a_fixed_point():
    target = Signal(offset=(0.5, -1.0))
    agents = tuple(AgentProblem(QuadraticTracking(Q, target)) for Q in (((1.0, 0.0), (0.0, 2.0)),
                                                                        ((3.0, 1.0), (1.0, 1.0))))
    X = np.array([[0.5, -1.0], [0.5, -1.0]])
    sc = Scenario(Graph.from_edge_list(2, [(0, 1)]), ProblemSet(agents), BarrierSchedule(), 10.0, X)
    out = step(sc, SwarmState(0.0, X), 1e-3)
    np.testing.assert_array_equal(out.x, X)
    assert out.t == 1e-3


def test_two_agent_disagreement_shrinks_at_the_sliding_rate():
    h1, h2, beta, dt = 1.0, 2.0, 100.0, 1e-4
    agents = (AgentProblem(QuadraticTracking(((h1,),), Signal(offset=(0.0,)))),
              AgentProblem(QuadraticTracking(((h2,),), Signal(offset=(0.0,)))))
    sc = Scenario(Graph.from_edge_list(2, [(0, 1)]), ProblemSet(agents), BarrierSchedule(), beta,
                  np.array([[1.0], [0.0]]), IntegrationConfig(dt=dt, t_end=0.1, sample_stride=1))
    tr = simulate(sc)
    gap = np.abs(tr.x[:, 0, 0] - tr.x[:, 1, 0])
    rate = beta * (1 / h1 + 1 / h2) * dt
    drops = -np.diff(gap)
    sliding = gap[:-1] > rate
    np.testing.assert_allclose(drops[sliding], rate, rtol=0.02)
    assert gap[-1] <= rate * 1.02


def test_bad_integration_settings_are_rejected():
    for kw in ({"dt": 0.0}, {"t_end": -1.0}, {"sample_stride": 0}, {"scheme": "heun"},
               {"smoothing_epsilon": -1.0}):
        with pytest.raises(ValueError):
            IntegrationConfig(**kw)


def test_disconnected_graph_is_rejected():
    _, problems = three_agent_constrained()
    with pytest.raises(ScenarioError, match="connected"):
        Scenario(Graph.from_edge_list(3, [(0, 1)]), problems, BarrierSchedule(), 1.0, np.zeros((3, 2)) - 3)


def test_infeasible_start_is_rejected():
    with pytest.raises(ScenarioError, match="strictly feasible") as info:
        small_scenario("constrained", init=np.array([[1.5, 0.0], [0.0, 0.0], [0.0, 0.0]]))
    assert "agent 1" in str(info.value)


def test_shape_and_gain_validation():
    with pytest.raises(ScenarioError):
        small_scenario(init=np.zeros((2, 2)))
    with pytest.raises(ScenarioError):
        small_scenario(beta=0.0)


@pytest.mark.parametrize("kind", ["unconstrained", "constrained"])
@pytest.mark.parametrize("scheme", ["euler", "rk4"])
def test_recorded_margins_stay_negative_and_signs_cancel(kind, scheme):
    tr = simulate(small_scenario(kind, scheme))
    assert tr.max_abs_sgn_sum == 0.0
    assert np.all(tr.sgn_sum == 0)
    if kind == "constrained":
        assert np.all(tr.margin_max < 0) and tr.max_margin < 0


def test_samples_fall_on_the_stride_plus_t_end():
    tr = simulate(small_scenario(dt=1e-3, t_end=0.0555, stride=10))
    np.testing.assert_allclose(tr.t, [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.056])
    assert np.all(np.diff(tr.t) > 0)


def test_recorded_control_is_the_applied_one():
    sc = small_scenario(dt=1e-3, t_end=0.01, stride=1)
    tr = simulate(sc)
    np.testing.assert_allclose(tr.x[1], tr.x[0] + 1e-3 * tr.u[0], rtol=0, atol=1e-15)


def test_identical_scenarios_give_identical_csv():
    a = simulate(small_scenario("constrained")).to_csv()
    b = simulate(small_scenario("constrained")).to_csv()
    assert a == b
    header = a.splitlines()[0].split(",")
    assert header == ["t", "agent", "x_1", "x_2", "u_1", "u_2", "phi_norm", "margin_1", "W1", "consensus_linf"]


def test_step_failure_after_halvings_are_exhausted():
    # a wall moving in faster than any halved step can follow
    agent = AgentProblem(QuadraticTracking(((1.0,),), Signal(offset=(0.0,))),
                         (AffineConstraint((1.0,), Signal(offset=0.0, slope=-1e6)),))
    sc = Scenario(Graph.from_edge_list(1, []), ProblemSet((agent,)), BarrierSchedule(10.0, 0.1), 1.0,
                  np.array([[-1e-3]]), IntegrationConfig(dt=1e-2, t_end=1.0, max_halvings=3))
    with pytest.raises(StepFailure) as info:
        simulate(sc)
    assert info.value.t == 0.0
    assert info.value.cause.agent == 0


def test_halving_rescues_a_step_near_the_barrier():
    agent = AgentProblem(QuadraticTracking(((1.0,),), Signal(offset=(5.0,))),
                         (AffineConstraint((1.0,), Signal(offset=0.0)),))
    sc = Scenario(Graph.from_edge_list(1, []), ProblemSet((agent,)), BarrierSchedule(10.0, 0.1), 1.0,
                  np.array([[-0.5]]), IntegrationConfig(dt=0.5, t_end=2.0, sample_stride=1))
    tr = simulate(sc)
    assert tr.halvings > 0
    assert np.all(tr.margin_max < 0)


def test_smoothing_keeps_the_sign_sum_antisymmetric():
    tr = simulate(small_scenario(epsilon=1e-2))
    assert np.max(np.abs(tr.sgn_sum)) <= 1e-12


def test_parallel_runs_match_serial(monkeypatch):
    scs = [small_scenario(t_end=0.2), small_scenario("constrained", t_end=0.2)]
    serial = [tr.to_csv() for tr in simulate_many(scs, workers=1)]
    monkeypatch.setenv("TVSWARM_THREADS", "2")
    assert [tr.to_csv() for tr in simulate_many(scs, workers=2)] == serial


def test_random_init_is_seeded(paper):
    _, problems = paper
    a = random_init(problems, 3)
    np.testing.assert_array_equal(a, random_init(problems, 3))
    assert not np.array_equal(a, random_init(problems, 4))
    assert np.all((a[:, 0] >= -10) & (a[:, 0] <= 0))
    np.testing.assert_allclose(a[:, 1], a[:, 0] - 2.0)


@settings(max_examples=15)
@given(st.lists(st.floats(-4, 4), min_size=6, max_size=6), st.floats(0.5, 20))
def test_random_unconstrained_starts_keep_invariants(xs, beta):
    init = np.array(xs).reshape(3, 2)
    tr = simulate(small_scenario(init=init, beta=beta, t_end=0.3))
    assert tr.max_abs_sgn_sum == 0.0
    assert np.all(np.isfinite(tr.x))
    assert np.all(tr.W1 >= 0)


def test_three_agent_constrained_tracks_oracle():
    sc = small_scenario("constrained", scheme="rk4", dt=1e-3, t_end=6.0, beta=20.0, stride=100)
    tr = simulate(sc)
    rep = kkt_optimum(sc.problems, float(tr.t[-1]))
    # barrier bias at rho = 10 e^{3} is about 1e-2
    assert np.max(np.linalg.norm(tr.x[-1] - rep.y_star, axis=1)) < 0.05


@pytest.mark.slow
def test_smoothing_is_a_small_perturbation_of_the_benchmark():
    exact, smooth = paper_run(), paper_run(epsilon=1e-3)
    sc = paper_scenario()
    ystar = kkt_optimum(sc.problems, 20.0).y_star
    err = [float(np.max(np.linalg.norm(tr.x[-1] - ystar, axis=1))) for tr in (exact, smooth)]
    assert abs(err[0] - err[1]) <= 0.05
