"""JSON scenario files.

A file looks like::

    {
      "schema": "tvswarm/1",
      "graph": {"n": 3, "edges": [[1, 2], [2, 3]]},
      "agents": [{"objective": {...}, "constraints": [{...}]}, ...],
      "barrier": {"a1": 100, "a2": 0.1},
      "beta": 25,
      "init": {"kind": "uniform", "low": -10, "high": 0, "offsets": [0, -2]},
      "integration": {"scheme": "rk4", "dt": 2e-4, "t_end": 20, "sample_interval": 0.01},
      "seed": 0
    }

Node labels in ``edges`` are 1-based.  Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tvswarm.barrier import BarrierSchedule
from tvswarm.graph import Graph
from tvswarm.metrics import LemmaThresholds
from tvswarm.problem import AgentProblem, ProblemSet, field_from_config
from tvswarm.simulator import IntegrationConfig, Scenario, ScenarioError, random_init

SCHEMA = "tvswarm/1"

_TOP = {"schema", "name", "graph", "agents", "barrier", "beta", "init", "integration", "seed",
        "oracle", "thresholds", "plot"}
_REQUIRED = {"schema", "graph", "agents", "beta"}


class ConfigError(ValueError):
    def __init__(self, where, msg):
        self.where = where
        super().__init__(f"{where}: {msg}" if where else msg)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    oracle_interval: float
    thresholds: LemmaThresholds
    plot: bool
    raw: dict
    name: str = ""


def _keys(obj, where, allowed, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(where, f"expected an object, got {type(obj).__name__}")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(where, f"unknown keys {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(where, f"missing keys {sorted(missing)}")


def _number(v, where, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(where, f"expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(where, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(where, f"must be nonnegative, got {v!r}")
    return float(v)


def _wrap(where, fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as err:
        raise ConfigError(where, str(err)) from err


def load_config(source, overrides=None) -> RunConfig:
    """Parse a path, JSON text or dict into a validated RunConfig.

    ``overrides`` may set ``dt``, ``t_end``, ``seed``, ``scheme`` and
    ``epsilon``; they are applied before validation.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError("", f"invalid JSON: {err}") from err
    apply_overrides(raw, overrides or {})
    return build(raw)


def apply_overrides(raw, overrides):
    integ = raw.setdefault("integration", {})
    names = {"dt": "dt", "t_end": "t_end", "scheme": "scheme", "epsilon": "smoothing_epsilon"}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            raw["seed"] = value
        elif key in names:
            integ[names[key]] = value
        else:
            raise ConfigError("overrides", f"unknown override {key!r}")


def build(raw) -> RunConfig:
    _keys(raw, "", _TOP, _REQUIRED)
    if raw["schema"] != SCHEMA:
        raise ConfigError("schema", f"expected {SCHEMA!r}, got {raw['schema']!r}")

    g = raw["graph"]
    _keys(g, "graph", {"n", "edges"}, {"n", "edges"})
    if not isinstance(g["n"], int) or g["n"] < 1:
        raise ConfigError("graph.n", f"expected a positive integer, got {g['n']!r}")
    graph = _wrap("graph.edges", Graph.from_edge_list, g["n"], [tuple(e) for e in g["edges"]], True)

    agents_cfg = raw["agents"]
    if not isinstance(agents_cfg, list) or len(agents_cfg) != graph.n:
        raise ConfigError("agents", f"expected a list of {graph.n} agents")
    agents, dim = [], None
    for i, a in enumerate(agents_cfg):
        where = f"agents[{i}]"
        _keys(a, where, {"objective", "constraints"}, {"objective"})
        obj = _wrap(f"{where}.objective", field_from_config, a["objective"], dim)
        dim = obj.dim
        cons = tuple(_wrap(f"{where}.constraints[{j}]", field_from_config, c, dim)
                     for j, c in enumerate(a.get("constraints", [])))
        agents.append(AgentProblem(obj, cons))
    problems = ProblemSet(tuple(agents))

    b = raw.get("barrier", {})
    _keys(b, "barrier", {"a1", "a2", "rho_max"})
    kw = {k: _number(b[k], f"barrier.{k}") for k in ("a1", "a2", "rho_max") if k in b}
    schedule = _wrap("barrier", lambda: BarrierSchedule(**kw))

    beta = _number(raw["beta"], "beta", positive=True)
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"expected a nonnegative integer, got {seed!r}")

    init = _init(raw.get("init", {"kind": "uniform"}), problems, seed)
    integration = _integration(raw.get("integration", {}))

    oracle = raw.get("oracle", {})
    _keys(oracle, "oracle", {"interval"})
    interval = _number(oracle.get("interval", 0.1), "oracle.interval", positive=True)
    thresholds = _wrap("thresholds", LemmaThresholds.from_config, raw.get("thresholds"))
    plot = raw.get("plot", True)
    if not isinstance(plot, bool):
        raise ConfigError("plot", "expected true or false")

    try:
        scenario = Scenario(graph, problems, schedule, beta, init, integration, seed)
    except ScenarioError as err:
        raise ConfigError("scenario", str(err)) from err
    return RunConfig(scenario, interval, thresholds, plot, raw, str(raw.get("name", "")))


def _init(cfg, problems, seed):
    _keys(cfg, "init", {"kind", "low", "high", "offsets", "x"}, {"kind"})
    kind = cfg["kind"]
    if kind == "uniform":
        _keys(cfg, "init", {"kind", "low", "high", "offsets"})
        low = _number(cfg.get("low", -10.0), "init.low")
        high = _number(cfg.get("high", 0.0), "init.high")
        if not high >= low:
            raise ConfigError("init", "high must be >= low")
        offsets = cfg.get("offsets")
        if offsets is not None and len(offsets) != problems.dim:
            raise ConfigError("init.offsets", f"expected {problems.dim} values")
        return random_init(problems, seed, low, high, offsets)
    if kind == "explicit":
        _keys(cfg, "init", {"kind", "x"}, {"kind", "x"})
        x = np.asarray(cfg["x"], dtype=float)
        if x.shape != (problems.n, problems.dim):
            raise ConfigError("init.x", f"expected shape ({problems.n}, {problems.dim}), got {x.shape}")
        return x
    raise ConfigError("init.kind", f"expected 'uniform' or 'explicit', got {kind!r}")


def _integration(cfg):
    allowed = {"scheme", "dt", "t_end", "sample_stride", "sample_interval", "smoothing_epsilon", "max_halvings"}
    _keys(cfg, "integration", allowed)
    if "sample_stride" in cfg and "sample_interval" in cfg:
        raise ConfigError("integration", "give sample_stride or sample_interval, not both")
    kw = {}
    if "scheme" in cfg:
        kw["scheme"] = cfg["scheme"]
    for k, sign in (("dt", "positive"), ("t_end", "nonneg"), ("smoothing_epsilon", "nonneg")):
        if k in cfg:
            kw[k] = _number(cfg[k], f"integration.{k}", **{sign: True})
    for k in ("sample_stride", "max_halvings"):
        if k in cfg:
            if isinstance(cfg[k], bool) or not isinstance(cfg[k], int):
                raise ConfigError(f"integration.{k}", f"expected an integer, got {cfg[k]!r}")
            kw[k] = cfg[k]
    if "sample_interval" in cfg:
        interval = _number(cfg["sample_interval"], "integration.sample_interval", positive=True)
        dt = kw.get("dt", IntegrationConfig.dt)
        kw["sample_stride"] = max(1, int(round(interval / dt)))
    return _wrap("integration", lambda: IntegrationConfig(**kw))


def scenario_config(graph: Graph, problems: ProblemSet, **extra) -> dict:
    """JSON-ready config for a graph and problem set (inverse of ``build``)."""
    doc = {"schema": SCHEMA,
           "graph": {"n": graph.n, "edges": [[a + 1, b + 1] for a, b in graph.edges]},
           "agents": [{"objective": a.objective.config(), "constraints": [c.config() for c in a.constraints]}
                      for a in problems.agents]}
    doc.update(extra)
    return doc


def dump_config(doc) -> str:
    """Indented JSON with numeric arrays kept on one line."""
    text = json.dumps(doc, indent=2)
    flat = re.compile(r"\[\s*([^\[\]{}]*?)\s*\]", re.S)
    for _ in range(3):
        text = flat.sub(lambda m: "[" + ", ".join(p.strip() for p in m.group(1).split(",")) + "]", text)
    return text + "\n"


def paper_config() -> dict:
    """The twelve-agent benchmark as a config document (what ``configs/paper.json`` holds)."""
    from tvswarm.problem import paper_benchmark

    graph, problems = paper_benchmark()
    return scenario_config(
        graph, problems, name="twelve-agent benchmark",
        barrier={"a1": 100.0, "a2": 0.1, "rho_max": 1e12}, beta=25.0,
        init={"kind": "uniform", "low": -10.0, "high": 0.0, "offsets": [0.0, -2.0]},
        integration={"scheme": "rk4", "dt": 2e-4, "t_end": 20.0, "sample_interval": 0.01,
                     "smoothing_epsilon": 0.0},
        seed=0, oracle={"interval": 0.1}, plot=True)
