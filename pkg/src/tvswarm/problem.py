"""Time-varying scalar fields with analytic derivative jets.

Every field evaluates, at ``(x, t)``, the bundle ``value, gradient, hessian,
time_gradient (d grad / dt), time_value (d value / dt)``.  Built-in families
evaluate many instances at once (``batch_jet``) so a whole swarm is one numpy
call per family; a single evaluation is a batch of one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar

import numpy as np

from tvswarm.graph import Graph, paper_graph


class FieldDomainError(ValueError):
    """A field produced a non-finite jet."""


@dataclass
class Jet:
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    time_gradient: np.ndarray
    time_value: np.ndarray

    def __getitem__(self, idx):
        return Jet(self.value[idx], self.gradient[idx], self.hessian[idx],
                   self.time_gradient[idx], self.time_value[idx])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in
                   (self.value, self.gradient, self.hessian, self.time_gradient, self.time_value))

    @classmethod
    def zeros(cls, shape, m):
        shape = tuple(shape)
        return cls(np.zeros(shape), np.zeros(shape + (m,)), np.zeros(shape + (m, m)),
                   np.zeros(shape + (m,)), np.zeros(shape))


# -- time profiles -----------------------------------------------------------

@dataclass(frozen=True)
class Signal:
    """``offset + slope*t + sin*sin(w t + phase) + cos*cos(w t + phase)``.

    Each coefficient is a scalar or a length-m vector (componentwise profile).
    """

    offset: tuple = 0.0
    slope: tuple = 0.0
    sin: tuple = 0.0
    cos: tuple = 0.0
    frequency: tuple = 1.0
    phase: tuple = 0.0

    KEYS: ClassVar[tuple] = ("offset", "slope", "sin", "cos", "frequency", "phase")

    def arrays(self, shape):
        return {k: np.broadcast_to(np.asarray(getattr(self, k), dtype=float), shape) for k in self.KEYS}

    def __call__(self, t):
        return self.value_and_rate(t)[0]

    def value_and_rate(self, t):
        shape = np.broadcast_shapes(*(np.shape(getattr(self, k)) for k in self.KEYS))
        return _signal(self.arrays(shape), t)

    @classmethod
    def from_config(cls, cfg):
        """Parse the ``target`` / ``bound`` JSON object of a field."""
        cfg = dict(cfg)
        kind = cfg.pop("kind", "harmonic")
        allowed = {
            "constant": {"value"},
            "linear": {"offset", "slope"},
            "sinusoid": {"amplitude", "frequency", "phase", "offset"},
            "harmonic": {"offset", "slope", "sin", "cos", "frequency", "phase"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown signal kind {kind!r}; expected one of {sorted(allowed)}")
        extra = set(cfg) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)} for signal kind {kind!r}")
        conv = {k: _tup(v) for k, v in cfg.items()}
        if kind == "constant":
            return cls(offset=conv.get("value", 0.0))
        if kind == "sinusoid":
            return cls(offset=conv.get("offset", 0.0), sin=conv.get("amplitude", 0.0),
                       frequency=conv.get("frequency", 1.0), phase=conv.get("phase", 0.0))
        return cls(**conv)

    def to_config(self):
        return {"kind": "harmonic", **{k: _jsonable(getattr(self, k)) for k in self.KEYS}}


def _tup(v):
    if isinstance(v, (list, tuple)):
        return tuple(float(a) for a in v)
    return float(v)


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _signal(p, t):
    """Value and time derivative of stacked signal parameters."""
    arg = p["frequency"] * t + p["phase"]
    s, c = np.sin(arg), np.cos(arg)
    val = p["offset"] + p["slope"] * t + p["sin"] * s + p["cos"] * c
    rate = p["slope"] + p["frequency"] * (p["sin"] * c - p["cos"] * s)
    return val, rate


# -- field families ----------------------------------------------------------

class ScalarField:
    """Base class for a time-varying scalar field on R^m.

    Families vectorize by overriding ``stack`` (fields -> parameter arrays,
    done once) and ``eval_stacked`` (parameters, points -> batched jet).
    """

    kind: ClassVar[str] = "abstract"
    dim: int

    def jet(self, x, t) -> Jet:
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            out = type(self).batch_jet([self], x[None, :], t)[0]
        if not out.is_finite():
            raise FieldDomainError(f"non-finite jet from {self!r} at x={x.tolist()}, t={t}")
        return out

    @classmethod
    def batch_jet(cls, fields, X, t) -> Jet:
        """Evaluate ``fields[k]`` at ``X[k]``."""
        return cls.eval_stacked(cls.stack(fields), X, t)

    @classmethod
    def stack(cls, fields):
        return list(fields)

    @classmethod
    def eval_stacked(cls, params, X, t) -> Jet:
        jets = [f._jet(x, t) for f, x in zip(params, X)]
        return Jet(*(np.stack([getattr(j, a) for j in jets]) for a in
                     ("value", "gradient", "hessian", "time_gradient", "time_value")))

    def _jet(self, x, t) -> Jet:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticTracking(ScalarField):
    """``0.5 (x - c(t))^T Q (x - c(t))`` with a componentwise target signal."""

    Q: tuple
    target: Signal
    kind: ClassVar[str] = "quadratic_tracking"

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got shape {q.shape}")
        if not np.array_equal(q, q.T):
            raise ValueError("Q must be symmetric")

    @property
    def dim(self):
        return len(self.Q)

    @classmethod
    def stack(cls, fields):
        m = fields[0].dim
        return np.array([f.Q for f in fields], dtype=float), _stack_signals([f.target for f in fields], (m,))

    @classmethod
    def eval_stacked(cls, params, X, t):
        Q, p = params
        c, cdot = _signal(p, t)
        d = X - c
        Qd = (Q @ d[:, :, None])[:, :, 0]
        return Jet(0.5 * np.sum(d * Qd, axis=1), Qd, Q,
                   -(Q @ cdot[:, :, None])[:, :, 0], -np.sum(Qd * cdot, axis=1))

    def config(self):
        return {"type": self.kind, "Q": [list(r) for r in self.Q], "target": self.target.to_config()}


@dataclass(frozen=True)
class AffineConstraint(ScalarField):
    """``a^T x - b(t)``."""

    a: tuple
    bound: Signal
    kind: ClassVar[str] = "affine"

    @property
    def dim(self):
        return len(self.a)

    @classmethod
    def stack(cls, fields):
        return np.array([f.a for f in fields], dtype=float), _stack_signals([f.bound for f in fields], ())

    @classmethod
    def eval_stacked(cls, params, X, t):
        A, p = params
        k, m = X.shape
        b, bdot = _signal(p, t)
        return Jet(np.sum(A * X, axis=1) - b, A, np.zeros((k, m, m)),
                   np.zeros((k, m)), -bdot)

    def config(self):
        return {"type": self.kind, "a": list(self.a), "bound": self.bound.to_config()}


@dataclass(frozen=True)
class QuadraticConstraint(ScalarField):
    """``scale * ||x - center||^2 - b(t)`` with ``scale >= 0`` (convex)."""

    center: tuple
    bound: Signal
    scale: float = 1.0
    kind: ClassVar[str] = "quadratic"

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("quadratic constraint scale must be nonnegative")

    @property
    def dim(self):
        return len(self.center)

    @classmethod
    def stack(cls, fields):
        return (np.array([f.center for f in fields], dtype=float),
                np.array([f.scale for f in fields], dtype=float),
                _stack_signals([f.bound for f in fields], ()))

    @classmethod
    def eval_stacked(cls, params, X, t):
        C, s, p = params
        k, m = X.shape
        b, bdot = _signal(p, t)
        d = X - C
        hess = 2.0 * s[:, None, None] * np.eye(m)[None]
        return Jet(s * np.einsum("ka,ka->k", d, d) - b, 2.0 * s[:, None] * d, hess,
                   np.zeros((k, m)), -bdot)

    def config(self):
        return {"type": self.kind, "center": list(self.center), "scale": self.scale,
                "bound": self.bound.to_config()}


@dataclass(frozen=True)
class ConstantField(ScalarField):
    dim: int
    value: float = 0.0
    kind: ClassVar[str] = "constant"

    @classmethod
    def stack(cls, fields):
        return np.array([f.value for f in fields], dtype=float)

    @classmethod
    def eval_stacked(cls, params, X, t):
        k, m = X.shape
        jet = Jet.zeros((k,), m)
        jet.value[:] = params
        return jet

    def config(self):
        return {"type": self.kind, "dim": self.dim, "value": self.value}


@dataclass(frozen=True)
class ScaledGradient(ScalarField):
    """Wraps a field and scales its reported gradient (fault injection)."""

    inner: ScalarField
    factor: float = 1.01
    kind: ClassVar[str] = "scaled_gradient"

    @property
    def dim(self):
        return self.inner.dim

    def _jet(self, x, t):
        j = type(self.inner).batch_jet([self.inner], x[None], t)[0]
        j.gradient = self.factor * j.gradient
        return j

    def config(self):
        return {"type": self.kind, "factor": self.factor, "inner": self.inner.config()}


@dataclass(frozen=True)
class ShiftedField(ScalarField):
    """``inner(x, t) - shift``; used for relaxed constraint sets."""

    inner: ScalarField
    shift: float
    kind: ClassVar[str] = "shifted"

    @property
    def dim(self):
        return self.inner.dim

    def _jet(self, x, t):
        j = type(self.inner).batch_jet([self.inner], x[None], t)[0]
        j.value = j.value - self.shift
        return j

    def config(self):
        return {"type": self.kind, "shift": self.shift, "inner": self.inner.config()}


def _stack_signals(signals, shape):
    per = [s.arrays(shape) for s in signals]
    return {k: np.stack([p[k] for p in per]) for k in Signal.KEYS}


class FieldBatch:
    """Evaluation plan for a fixed heterogeneous list of fields.

    Parameters are stacked once per family; each call is then one vectorized
    evaluation per family present.
    """

    def __init__(self, fields, m):
        self.k = len(fields)
        self.m = m
        groups = {}
        for idx, f in enumerate(fields):
            groups.setdefault(type(f), []).append(idx)
        self.groups = [(cls, np.array(idx), cls.stack([fields[i] for i in idx])) for cls, idx in groups.items()]
        self.single = len(self.groups) == 1

    def evaluate(self, X, t) -> Jet:
        if self.single:
            cls, _, params = self.groups[0]
            return cls.eval_stacked(params, X, t)
        out = Jet.zeros((self.k,), self.m)
        for cls, idx, params in self.groups:
            j = cls.eval_stacked(params, X[idx], t)
            for a in ("value", "gradient", "hessian", "time_gradient", "time_value"):
                getattr(out, a)[idx] = getattr(j, a)
        return out


FAMILIES = {cls.kind: cls for cls in
            (QuadraticTracking, AffineConstraint, QuadraticConstraint, ConstantField)}


def field_from_config(cfg, dim=None) -> ScalarField:
    """Build a built-in field from its JSON object; unknown keys are rejected."""
    cfg = dict(cfg)
    kind = cfg.pop("type", None)
    spec = {
        "quadratic_tracking": ({"Q", "target"}, set()),
        "affine": ({"a", "bound"}, set()),
        "quadratic": ({"bound"}, {"center", "scale"}),
        "constant": (set(), {"value", "dim"}),
    }
    if kind not in spec:
        raise ValueError(f"unknown field type {kind!r}; expected one of {sorted(spec)}")
    required, optional = spec[kind]
    missing = required - set(cfg)
    extra = set(cfg) - required - optional
    if missing:
        raise ValueError(f"field type {kind!r} missing keys {sorted(missing)}")
    if extra:
        raise ValueError(f"field type {kind!r} has unknown keys {sorted(extra)}")
    if kind == "quadratic_tracking":
        f = QuadraticTracking(tuple(tuple(float(v) for v in row) for row in cfg["Q"]),
                              Signal.from_config(cfg["target"]))
    elif kind == "affine":
        f = AffineConstraint(tuple(float(v) for v in cfg["a"]), Signal.from_config(cfg["bound"]))
    elif kind == "quadratic":
        if "center" not in cfg and dim is None:
            raise ValueError("quadratic constraint needs 'center' or a known dimension")
        center = cfg.get("center", [0.0] * (dim or 0))
        f = QuadraticConstraint(tuple(float(v) for v in center), Signal.from_config(cfg["bound"]),
                                float(cfg.get("scale", 1.0)))
    else:
        f = ConstantField(int(cfg.get("dim", dim)), float(cfg.get("value", 0.0)))
    if dim is not None and f.dim != dim:
        raise ValueError(f"field dimension {f.dim} does not match problem dimension {dim}")
    return f


# -- problems ----------------------------------------------------------------

@dataclass(frozen=True)
class AgentProblem:
    objective: ScalarField
    constraints: tuple = ()

    def __post_init__(self):
        for g in self.constraints:
            if g.dim != self.objective.dim:
                raise ValueError("constraint dimension differs from objective dimension")

    @property
    def dim(self):
        return self.objective.dim

    @property
    def n_constraints(self):
        return len(self.constraints)

    def constraint_jets(self, x, t) -> Jet:
        """Jets of all constraints stacked along the first axis (length q)."""
        if not self.constraints:
            return Jet.zeros((0,), self.dim)
        x = np.asarray(x, dtype=float)
        return self._constraint_batch.evaluate(np.broadcast_to(x, (len(self.constraints), self.dim)), t)

    @cached_property
    def _constraint_batch(self):
        return FieldBatch(list(self.constraints), self.dim)


@dataclass(frozen=True)
class ProblemSet:
    agents: tuple

    def __post_init__(self):
        if not self.agents:
            raise ValueError("problem set needs at least one agent")
        dims = {a.dim for a in self.agents}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on dimension: {sorted(dims)}")

    @property
    def n(self):
        return len(self.agents)

    @property
    def dim(self):
        return self.agents[0].dim

    @cached_property
    def q(self) -> np.ndarray:
        return np.array([a.n_constraints for a in self.agents])

    @cached_property
    def q_max(self) -> int:
        return int(self.q.max())

    @cached_property
    def constraint_mask(self) -> np.ndarray:
        return np.arange(self.q_max)[None, :] < self.q[:, None]

    @cached_property
    def _flat_constraints(self):
        agent_idx, slot_idx, fields = [], [], []
        for i, a in enumerate(self.agents):
            for j, g in enumerate(a.constraints):
                agent_idx.append(i)
                slot_idx.append(j)
                fields.append(g)
        return np.array(agent_idx, dtype=int), np.array(slot_idx, dtype=int), fields

    @cached_property
    def _objective_batch(self):
        return FieldBatch([a.objective for a in self.agents], self.dim)

    @cached_property
    def _constraint_batch(self):
        ai, si, fields = self._flat_constraints
        return FieldBatch(fields, self.dim)

    @cached_property
    def _padded_is_flat(self):
        # one constraint per agent: flat order equals padded order
        return self.q_max == 1 and bool(np.all(self.q == 1))

    def objective_jets(self, X, t) -> Jet:
        return self._objective_batch.evaluate(np.asarray(X, dtype=float), t)

    def constraint_jets(self, X, t) -> Jet:
        """Padded ``(n, q_max)`` constraint jets; padding slots are all-zero.

        A zero constraint slot is neutral in the barrier (log 1 = 0, zero
        gradient and curvature), so padded arrays need no masking there.
        """
        X = np.asarray(X, dtype=float)
        ai, si, fields = self._flat_constraints
        if self._padded_is_flat:
            j = self._constraint_batch.evaluate(X, t)
            return Jet(j.value[:, None], j.gradient[:, None], j.hessian[:, None],
                       j.time_gradient[:, None], j.time_value[:, None])
        out = Jet.zeros((self.n, self.q_max), self.dim)
        if fields:
            j = self._constraint_batch.evaluate(X[ai], t)
            for a in ("value", "gradient", "hessian", "time_gradient", "time_value"):
                getattr(out, a)[ai, si] = getattr(j, a)
        return out

    def total_objective(self, y, t) -> float:
        y = np.asarray(y, dtype=float)
        return float(self.objective_jets(np.broadcast_to(y, (self.n, self.dim)), t).value.sum())

    def distinct_constraints(self):
        """Group identical constraints: list of (config, [(agent, slot), ...])."""
        groups = {}
        for i, a in enumerate(self.agents):
            for j, g in enumerate(a.constraints):
                groups.setdefault(g, []).append((i, j))
        return [(g.config(), members) for g, members in groups.items()]


# -- finite-difference checker -----------------------------------------------

@dataclass
class DiscrepancyReport:
    """Scaled errors ``max|analytic - numeric| / max(1, max|analytic|)`` per jet part."""

    errors: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def ok(self, tol=1e-6) -> bool:
        return self.max_error < tol

    def merge(self, other):
        for k, v in other.errors.items():
            self.errors[k] = max(self.errors.get(k, 0.0), v)
        return self


def scaled_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    if analytic.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def central_differences(evaluate, x, t, h, order=2, h_time=None):
    """Central differences of a jet-valued ``evaluate(x, t)``.

    Returns numeric (gradient from values, hessian from gradients,
    time_gradient from gradients, time_value from values).  ``order`` 4 uses
    the five-point stencil.  ``h_time`` overrides the step along ``t``.
    """
    if order == 2:
        weights = ((1.0, 1),)
        denom = 2.0
    elif order == 4:
        weights = ((8.0, 1), (-1.0, 2))
        denom = 12.0
    else:
        raise ValueError("order must be 2 or 4")

    def diff(at, h=h):
        val = grad = 0.0
        for w, k in weights:
            jp, jm = at(k * h), at(-k * h)
            val = val + w * (jp.value - jm.value)
            grad = grad + w * (jp.gradient - jm.gradient)
        return val / (denom * h), grad / (denom * h)

    x = np.asarray(x, dtype=float)
    m = x.size
    grad = np.empty(m)
    hess = np.empty((m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        grad[k], hess[:, k] = diff(lambda d: evaluate(x + d * e, t))
    tval, tgrad = diff(lambda d: evaluate(x, t + d), h if h_time is None else h_time)
    return grad, 0.5 * (hess + hess.T), tgrad, tval


def compare_jet(jet, numeric) -> DiscrepancyReport:
    grad, hess, tgrad, tval = numeric
    return DiscrepancyReport({
        "gradient": scaled_error(jet.gradient, grad),
        "hessian": scaled_error(jet.hessian, hess),
        "time_gradient": scaled_error(jet.time_gradient, tgrad),
        "time_value": scaled_error(jet.time_value, tval),
        "hessian_asymmetry": float(np.max(np.abs(jet.hessian - jet.hessian.T))) if jet.hessian.size else 0.0,
    })


def check_jet(field: ScalarField, x, t, h=1e-5) -> DiscrepancyReport:
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    return compare_jet(field.jet(x, t), central_differences(field.jet, x, t, h))


def warn_if_nonconvex(problems: ProblemSet, rng, samples=20, t_max=20.0, spread=10.0):
    """Sample objective/constraint Hessians and warn on negative curvature."""
    worst = np.inf
    for _ in range(samples):
        t = rng.uniform(0.0, t_max)
        X = rng.uniform(-spread, spread, size=(problems.n, problems.dim))
        H = problems.objective_jets(X, t).hessian
        worst = min(worst, float(np.linalg.eigvalsh(H).min()))
        if problems.q_max:
            Hg = problems.constraint_jets(X, t).hessian
            worst = min(worst, float(np.linalg.eigvalsh(Hg).min()))
    if worst < 0:
        warnings.warn(f"sampled Hessian eigenvalue {worst:.3g} < 0: problem is not convex", stacklevel=2)
    return worst


# -- benchmark ---------------------------------------------------------------

def paper_agent(i: int) -> AgentProblem:
    """Agent ``i`` (1-based) of the 12-agent benchmark."""
    objective = QuadraticTracking(((1.0, 0.0), (0.0, 3.0)), Signal(sin=(-float(i), 0.0), cos=(0.0, float(i))))
    if i <= 6:
        con = AffineConstraint((-1.0, 1.0), Signal(cos=1.0))   # y - x - cos t
    else:
        con = AffineConstraint((0.0, 1.0), Signal(slope=1.0))  # y - t
    return AgentProblem(objective, (con,))


def paper_benchmark() -> tuple[Graph, ProblemSet]:
    return paper_graph(), ProblemSet(tuple(paper_agent(i) for i in range(1, 13)))
