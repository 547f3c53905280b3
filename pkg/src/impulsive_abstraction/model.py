"""Impulsive subsystems, interconnection topology and jump timing.

A subsystem flows by ``x' = A x + B w + D u + bias`` between jump instants and
jumps by ``x+ = A_g x + B_g w + D_g u + bias_g`` at them.  ``w`` is the internal
input: the concatenation, in ascending neighbour id, of the outputs the
subsystem reads from its in-neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import StructureError

_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Box:
    """Axis-aligned interval box ``[lower, upper]`` (possibly zero-dimensional)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.reshape(np.asarray(self.lower, dtype=float), (-1,)))
        hi = _frozen(np.reshape(np.asarray(self.upper, dtype=float), (-1,)))
        if lo.shape != hi.shape:
            raise StructureError(f"box bounds have shapes {lo.shape} and {hi.shape}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> "Box":
        intervals = list(intervals)
        if not intervals:
            return cls(np.zeros(0), np.zeros(0))
        arr = np.asarray(intervals, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def strictly_ordered(self) -> bool:
        return bool(np.all(self.lower < self.upper))

    def contains(self, x, tol: float = _TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def contains_box(self, other: "Box", tol: float = _TOL) -> bool:
        return bool(np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol))

    def intervals(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))


def affine_image(matrix, box: Box, offset=None) -> Box:
    """Tight interval hull of ``{M x + offset : x in box}``."""
    m = np.asarray(matrix, dtype=float).reshape(-1, box.dim)
    c = m @ box.center
    r = np.abs(m) @ box.radius
    if offset is not None:
        c = c + np.asarray(offset, dtype=float)
    return Box(c - r, c + r)


def hull(points) -> Box:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return Box(pts.min(axis=0), pts.max(axis=0))


@dataclass(frozen=True)
class AffineDynamics:
    """Right-hand side ``A x + B w + D u + bias``."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    bias: np.ndarray = None

    def __post_init__(self):
        A = _frozen(np.atleast_2d(self.A))
        n = A.shape[0]
        B = _frozen(np.reshape(self.B, (n, -1)) if np.size(self.B) else np.zeros((n, 0)))
        D = _frozen(np.reshape(self.D, (n, -1)) if np.size(self.D) else np.zeros((n, 0)))
        bias = _frozen(np.zeros(n) if self.bias is None else np.reshape(self.bias, (-1,)))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def scalar(cls, a: float, b: float = 0.0, d: float = 0.0, bias: float = 0.0) -> "AffineDynamics":
        return cls([[a]], [[b]], [[d]], [bias])

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def internal_dim(self) -> int:
        return self.B.shape[1]

    @property
    def input_dim(self) -> int:
        return self.D.shape[1]

    def dimension_issues(self, n: int, q: int, m: int) -> list:
        issues = []
        if self.A.shape != (n, n):
            issues.append(f"A has shape {self.A.shape}, expected {(n, n)}")
        if self.B.shape != (n, q):
            issues.append(f"B has shape {self.B.shape}, expected {(n, q)}")
        if self.D.shape != (n, m):
            issues.append(f"D has shape {self.D.shape}, expected {(n, m)}")
        if self.bias.shape != (n,):
            issues.append(f"bias has shape {self.bias.shape}, expected {(n,)}")
        return issues

    def __call__(self, x, w, u) -> np.ndarray:
        return evaluate_dynamics(self, x, w, u)


def evaluate_dynamics(dyn: AffineDynamics, x, w, u) -> np.ndarray:
    """Return ``A x + B w + D u + bias``; raises StructureError on a dimension mismatch."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.reshape(np.asarray(w, dtype=float), (-1,))
    u = np.reshape(np.asarray(u, dtype=float), (-1,))
    n = dyn.state_dim
    if x.shape != (n,) or w.shape != (dyn.internal_dim,) or u.shape != (dyn.input_dim,):
        raise StructureError(
            f"dimension mismatch: x{x.shape} w{w.shape} u{u.shape} for "
            f"n={n}, q={dyn.internal_dim}, m={dyn.input_dim}")
    return dyn.A @ x + dyn.B @ w + dyn.D @ u + dyn.bias


@dataclass(frozen=True)
class JumpTiming:
    """Jump instants are spaced by ``c * tau`` with ``z_min <= c <= z_max``."""

    tau: float
    z_min: int
    z_max: int
    instants: Optional[tuple] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise StructureError(f"tau must be positive, got {self.tau}")
        if int(self.z_min) != self.z_min or int(self.z_max) != self.z_max:
            raise StructureError("z_min and z_max must be integers")
        if not 1 <= self.z_min <= self.z_max:
            raise StructureError(f"need 1 <= z_min <= z_max, got {self.z_min}, {self.z_max}")
        object.__setattr__(self, "z_min", int(self.z_min))
        object.__setattr__(self, "z_max", int(self.z_max))
        if self.instants is not None:
            object.__setattr__(self, "instants", tuple(float(t) for t in self.instants))

    def instant_issues(self, instants=None) -> list:
        """Check an explicit list of jump instants against (tau, z_min, z_max).

        The first gap is measured from t = 0, where every counter starts at 0.
        """
        instants = self.instants if instants is None else tuple(instants)
        if instants is None:
            return []
        issues = []
        prev = 0.0
        for t in instants:
            steps = (t - prev) / self.tau
            k = round(steps)
            if abs(steps - k) > 1e-6:
                issues.append(f"jump at t={t} is not on the tau-grid")
            elif not self.z_min <= k <= self.z_max:
                issues.append(f"gap {t - prev:g} before t={t} is {k} periods, outside [{self.z_min}, {self.z_max}]")
            prev = t
        return issues


class JumpWindow(NamedTuple):
    flow_allowed: bool
    jump_allowed: bool


def jump_window(c: int, timing: JumpTiming) -> JumpWindow:
    if not 0 <= c <= timing.z_max:
        raise StructureError(f"counter {c} outside [0, {timing.z_max}]")
    return JumpWindow(c <= timing.z_max - 1, timing.z_min <= c)


@dataclass(frozen=True)
class ImpulsiveSubsystem:
    """One impulsive subsystem.

    ``outputs`` maps a target id to the matrix ``C_ij`` of the output block
    ``y_ij = C_ij x_i``; the entry keyed by the subsystem's own id is its
    external output.  ``external_inputs`` is either a finite list of input
    vectors or a Box.  ``flow_rhs`` is an optional nonlinear right-hand side
    ``f(x, w, u)`` used by the simulator only.
    """

    id: int
    flow: AffineDynamics
    jump: AffineDynamics
    state_box: Box
    internal_input_box: Box
    external_inputs: object
    timing: JumpTiming
    outputs: Mapping = field(default_factory=dict)
    safe_box: Optional[Box] = None
    certificate: Optional[Mapping] = None
    flow_rhs: Optional[Callable] = None

    def __post_init__(self):
        outs = {int(k): _frozen(np.reshape(v, (-1, self.state_dim)) if np.size(v) else np.zeros((0, self.state_dim)))
                for k, v in dict(self.outputs).items()}
        object.__setattr__(self, "outputs", outs)
        if not isinstance(self.external_inputs, Box):
            pts = [tuple(float(v) for v in np.atleast_1d(p)) for p in self.external_inputs]
            object.__setattr__(self, "external_inputs", tuple(sorted(set(pts))))

    @property
    def state_dim(self) -> int:
        return self.flow.state_dim

    @property
    def internal_dim(self) -> int:
        return self.internal_input_box.dim

    @property
    def input_dim(self) -> int:
        if isinstance(self.external_inputs, Box):
            return self.external_inputs.dim
        return len(self.external_inputs[0]) if self.external_inputs else self.flow.input_dim

    def input_hull(self) -> Box:
        if isinstance(self.external_inputs, Box):
            return self.external_inputs
        return hull(self.external_inputs)

    def output_matrix(self, target: int) -> np.ndarray:
        return self.outputs.get(target, np.zeros((0, self.state_dim)))

    def stacked_output(self) -> np.ndarray:
        """All output blocks stacked in ascending target id (the full map h_i)."""
        blocks = [self.outputs[k] for k in sorted(self.outputs)]
        if not blocks:
            return np.zeros((0, self.state_dim))
        return np.vstack(blocks)

    def output_lipschitz(self) -> float:
        h = self.stacked_output()
        return float(np.abs(h).sum(axis=1).max()) if h.size else 0.0

    @property
    def safe(self) -> Box:
        return self.safe_box if self.safe_box is not None else self.state_box


@dataclass(frozen=True)
class NetworkModel:
    """Interconnected impulsive system; an edge ``(j, i)`` means ``w_i`` reads ``y_ji``."""

    subsystems: tuple
    edges: frozenset = frozenset()
    internal_variation_bound: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        object.__setattr__(self, "edges", frozenset((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "internal_variation_bound",
                           {int(k): float(v) for k, v in dict(self.internal_variation_bound).items()})

    @property
    def ids(self) -> list:
        return [s.id for s in self.subsystems]

    def __len__(self):
        return len(self.subsystems)

    def index(self, sid: int) -> int:
        for k, s in enumerate(self.subsystems):
            if s.id == sid:
                return k
        raise KeyError(sid)

    def by_id(self, sid: int) -> ImpulsiveSubsystem:
        return self.subsystems[self.index(sid)]

    def in_neighbors(self, sid: int) -> list:
        return sorted(j for j, i in self.edges if i == sid and j != sid)

    def internal_layout(self, sid: int) -> list:
        """``[(source id, slice into w_i)]`` in ascending source id."""
        layout, start = [], 0
        for j in self.in_neighbors(sid):
            p = self.by_id(j).output_matrix(sid).shape[0]
            layout.append((j, slice(start, start + p)))
            start += p
        return layout

    def internal_input(self, sid: int, states: Mapping) -> np.ndarray:
        """Evaluate ``w_i`` from neighbour states (mapping id -> state vector)."""
        parts = [self.by_id(j).output_matrix(sid) @ np.asarray(states[j], dtype=float)
                 for j in self.in_neighbors(sid)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def variation_bound(self, sid: int) -> float:
        """Bound on ``|w_i(t) - w_i(k tau)|`` within one sampling period.

        Uses the configured value when present, otherwise an a-priori interval
        estimate ``max_j ||C_ji|| * tau * sup |f_j|`` over the state, internal
        and external input boxes of each in-neighbour j.
        """
        if sid in self.internal_variation_bound:
            return self.internal_variation_bound[sid]
        sub = self.by_id(sid)
        best = 0.0
        for j in self.in_neighbors(sid):
            src = self.by_id(j)
            c = src.output_matrix(sid)
            speed = flow_speed_bound(src)
            best = max(best, float(np.abs(c).sum(axis=1).max()) * sub.timing.tau * speed)
        return best

    def subset(self, ids: Sequence[int]) -> "NetworkModel":
        keep = set(ids)
        return NetworkModel(tuple(s for s in self.subsystems if s.id in keep),
                            frozenset(e for e in self.edges if e[0] in keep and e[1] in keep),
                            {k: v for k, v in self.internal_variation_bound.items() if k in keep})


def flow_speed_bound(sub: ImpulsiveSubsystem) -> float:
    """Interval bound on ``||f(x, w, u)||_inf`` over the subsystem's boxes."""
    f = sub.flow
    x, w, u = sub.state_box, sub.internal_input_box, sub.input_hull()
    lo = f.bias.copy()
    hi = f.bias.copy()
    for mat, box in ((f.A, x), (f.B, w), (f.D, u)):
        if box.dim == 0:
            continue
        img = affine_image(mat, box)
        lo = lo + img.lower
        hi = hi + img.upper
    return float(np.max(np.maximum(np.abs(lo), np.abs(hi)))) if lo.size else 0.0


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "well-formed" if self.ok else "\n".join(self.issues)


def validate_network(model: NetworkModel) -> ValidationReport:
    """Collect every structural problem of ``model``; never raises."""
    issues = []
    if len(model.subsystems) == 0:
        return ValidationReport(["empty network"])
    ids = model.ids
    if len(set(ids)) != len(ids):
        issues.append(f"duplicate subsystem ids {ids}")
    known = set(ids)
    for j, i in sorted(model.edges):
        if i == j:
            issues.append(f"self-edge {j}->{i}")
        if j not in known or i not in known:
            issues.append(f"edge {j}->{i} references an unknown subsystem")
    if issues:
        return ValidationReport(issues)

    for sub in model.subsystems:
        i = sub.id
        n = sub.state_dim
        if sub.state_box.dim != n:
            issues.append(f"subsystem {i}: state box has dimension {sub.state_box.dim}, expected {n}")
        elif not sub.state_box.strictly_ordered():
            issues.append(f"subsystem {i}: state box bounds not strictly ordered")
        q, m = sub.internal_dim, sub.input_dim
        for name, dyn in (("flow", sub.flow), ("jump", sub.jump)):
            for msg in dyn.dimension_issues(n, q, m):
                issues.append(f"subsystem {i} {name}: {msg}")
        if not isinstance(sub.external_inputs, Box) and not sub.external_inputs:
            issues.append(f"subsystem {i}: empty external input set")
        for target, mat in sub.outputs.items():
            if target not in known:
                issues.append(f"subsystem {i}: output block for unknown target {target}")
            if mat.shape[1] != n:
                issues.append(f"subsystem {i}: output block h_{i}{target} has {mat.shape[1]} columns, expected {n}")
        for target in ids:
            if target == i:
                continue
            mat = sub.outputs.get(target)
            nonzero = mat is not None and mat.size > 0 and np.any(mat != 0)
            edge = (i, target) in model.edges
            if edge and not nonzero:
                issues.append(f"edge {i}->{target} exists but h_{i}{target} is zero or missing")
            if nonzero and not edge:
                issues.append(f"h_{i}{target} is nonzero but there is no edge {i}->{target}")
        issues.extend(f"subsystem {i}: {msg}" for msg in sub.timing.instant_issues())
        if sub.safe_box is not None and not sub.state_box.contains_box(sub.safe_box):
            issues.append(f"subsystem {i}: safe box not contained in state box")

    for sub in model.subsystems:
        i = sub.id
        layout = model.internal_layout(i)
        q_expected = layout[-1][1].stop if layout else 0
        if sub.internal_dim != q_expected:
            issues.append(f"subsystem {i}: internal input box has dimension {sub.internal_dim}, "
                          f"but in-neighbour outputs provide {q_expected}")
            continue
        for j, sl in layout:
            src = model.by_id(j)
            mat = src.output_matrix(i)
            if mat.shape[1] != src.state_dim or src.state_box.dim != src.state_dim:
                continue
            image = affine_image(mat, src.state_box)
            block = Box(sub.internal_input_box.lower[sl], sub.internal_input_box.upper[sl])
            if not block.contains_box(image):
                issues.append(f"edge {j}->{i}: output image {image.intervals()} not contained in "
                              f"internal input block {block.intervals()}")
    return ValidationReport(issues)


def ring_network(params: Sequence[Mapping], *, state_box=(-5.0, 5.0), tau=0.2, z_min=1, z_max=10,
                 inputs=(-1.0, 1.0), instants=None) -> NetworkModel:
    """Scalar warehouse-style ring: subsystem i reads the state of subsystem i-1 (1 reads N).

    Each entry of ``params`` holds the scalars a, b, d (flow) and r, q, dbar (jump).
    """
    n = len(params)
    ids = list(range(1, n + 1))
    edges = set()
    if n > 1:
        edges = {(ids[k - 1], ids[k]) for k in range(n)}
    subs = []
    lo, hi = state_box
    for k, p in enumerate(params):
        sid = ids[k]
        reads = n > 1
        b = p["b"] if reads else 0.0
        q = p["q"] if reads else 0.0
        flow = AffineDynamics([[p["a"]]], [[b]] if reads else np.zeros((1, 0)), [[p["d"]]])
        jump = AffineDynamics([[p["r"]]], [[q]] if reads else np.zeros((1, 0)), [[p["dbar"]]])
        outputs = {sid: [[1.0]]}
        if n > 1:
            outputs[ids[(k + 1) % n]] = [[1.0]]
        w_box = Box([lo], [hi]) if reads else Box(np.zeros(0), np.zeros(0))
        subs.append(ImpulsiveSubsystem(
            id=sid, flow=flow, jump=jump, state_box=Box([lo], [hi]), internal_input_box=w_box,
            external_inputs=[[v] for v in inputs],
            timing=JumpTiming(tau, z_min, z_max, instants), outputs=outputs))
    return NetworkModel(tuple(subs), frozenset(edges))


WAREHOUSE_PARAMS = (
    {"a": -1.0, "b": 0.4, "d": 1.0, "r": 0.05, "q": 0.4, "dbar": 1.0},
    {"a": -1.5, "b": 0.5, "d": 1.0, "r": 0.03, "q": 0.5, "dbar": 1.0},
    {"a": -2.0, "b": 0.5, "d": 0.5, "r": 0.08, "q": 0.5, "dbar": 1.0},
)


def warehouses(n: int = 3, **kwargs) -> NetworkModel:
    """The warehouse ring with parameters cycling through the three-warehouse set."""
    params = [WAREHOUSE_PARAMS[k % len(WAREHOUSE_PARAMS)] for k in range(n)]
    kwargs.setdefault("instants", tuple(float(t) for t in range(1, 11)))
    return ring_network(params, **kwargs)
