"""Closed-loop simulation and monitoring of the simulation-function inequalities.

Two run formats exist.  :class:`Trajectory` samples the concrete network at
every multiple of tau, storing left limits at jump instants.  :class:`EventRun`
is a sequence of discrete steps (one global flow over a period, or one jump
event) and is what paired concrete/abstract runs and the monitor use.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .abstraction import FLOW, JUMP, input_points, product_inputs
from .arena import event_masks
from .certificates import CertificateBundle, ComposedAsf
from .errors import StructureError, UnsafeRegionError
from .gains import compose_asf_value, compose_parameters
from .integrators import rk4
from .model import NetworkModel


def _offsets(network: NetworkModel):
    return np.cumsum([0] + [s.state_dim for s in network.subsystems])


def _split(network: NetworkModel, x) -> dict:
    offs = _offsets(network)
    return {s.id: np.asarray(x[offs[k]:offs[k + 1]], dtype=float) for k, s in enumerate(network.subsystems)}


def internal_inputs(network: NetworkModel, x) -> np.ndarray:
    """All internal inputs ``w_i = (C_ji x_j)_j``, concatenated in subsystem order."""
    parts = _split(network, x)
    ws = [network.internal_input(s.id, parts) for s in network.subsystems]
    return np.concatenate(ws) if ws else np.zeros(0)


def coupled_rhs(network: NetworkModel, u_vectors: Sequence[np.ndarray]) -> Callable:
    """Right-hand side of the interconnected flow with constant external inputs."""
    subs = network.subsystems
    offs = _offsets(network)

    def rhs(x):
        parts = {s.id: x[offs[k]:offs[k + 1]] for k, s in enumerate(subs)}
        out = np.empty_like(x)
        for k, s in enumerate(subs):
            w = network.internal_input(s.id, parts)
            xi = parts[s.id]
            if s.flow_rhs is not None:
                out[offs[k]:offs[k + 1]] = s.flow_rhs(xi, w, u_vectors[k])
            else:
                f = s.flow
                out[offs[k]:offs[k + 1]] = f.A @ xi + f.B @ w + f.D @ u_vectors[k] + f.bias
        return out

    return rhs


def flow_step(network: NetworkModel, x, u_vectors, substeps: int = 32):
    """Integrate one period; also returns the largest internal-input drift per subsystem."""
    tau = network.subsystems[0].timing.tau
    rhs = coupled_rhs(network, u_vectors)
    w0 = internal_inputs(network, x)
    h = tau / substeps
    y = np.array(x, dtype=float)
    drift = np.zeros(len(network))
    q_off = np.cumsum([0] + [s.internal_dim for s in network.subsystems])
    for _ in range(substeps):
        y = rk4(rhs, y, h, 1)
        dw = np.abs(internal_inputs(network, y) - w0)
        for k in range(len(network)):
            if q_off[k + 1] > q_off[k]:
                drift[k] = max(drift[k], float(dw[q_off[k]:q_off[k + 1]].max()))
    return y, drift


def jump_step(network: NetworkModel, x, mask, u_vectors) -> np.ndarray:
    """Apply the jump maps of the components in ``mask`` simultaneously from ``x``."""
    parts = _split(network, x)
    offs = _offsets(network)
    out = np.array(x, dtype=float)
    for k, s in enumerate(network.subsystems):
        if mask[k]:
            w = network.internal_input(s.id, parts)
            out[offs[k]:offs[k + 1]] = s.jump(parts[s.id], w, u_vectors[k])
    return out


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray                # right values at each sampling instant
    x_minus: np.ndarray          # left limits (equal to x where nothing jumped)
    counters: np.ndarray         # counters after any jump at that instant
    jumped: np.ndarray           # (K+1, N) jump markers
    u_jump: np.ndarray           # product input index used at jumps (-1: none)
    u_flow: np.ndarray           # product input index held over [t_k, t_k+1) (-1 at the end)
    w: np.ndarray                # internal inputs after jumps
    u: np.ndarray                # input values held over [t_k, t_k+1) (nan at the end)
    phi_observed: np.ndarray     # largest intra-period internal-input drift per subsystem
    ids: list
    halted: Optional[str] = None

    def stays_in(self, boxes: Mapping, network: NetworkModel, tol: float = 1e-9) -> bool:
        for row in np.vstack([self.x, self.x_minus]):
            parts = _split(network, row)
            if not all(boxes[sid].contains(v, tol) for sid, v in parts.items()):
                return False
        return True

    def to_csv(self, path: str, network: NetworkModel) -> None:
        head = ["t"]
        for s in network.subsystems:
            head += [f"x{s.id}" if s.state_dim == 1 else f"x{s.id}_{d}" for d in range(s.state_dim)]
        for s in network.subsystems:
            head += [f"u{s.id}" if s.input_dim == 1 else f"u{s.id}_{d}" for d in range(s.input_dim)]
        head += [f"jump{sid}" for sid in self.ids] + [f"c{sid}" for sid in self.ids]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(head)
            for k in range(len(self.t)):
                wr.writerow([f"{self.t[k]:.10g}"] + [f"{v:.12g}" for v in self.x[k]]
                            + ["" if np.isnan(v) else f"{v:.12g}" for v in self.u[k]]
                            + [int(j) for j in self.jumped[k]] + [int(c) for c in self.counters[k]])


def jump_steps_from_schedule(network: NetworkModel, schedule: Optional[Mapping] = None) -> dict:
    """Map subsystem id -> set of sampling-step indices at which it jumps (None: forced at z_max)."""
    out = {}
    for s in network.subsystems:
        inst = None
        if schedule is not None and s.id in schedule:
            inst = schedule[s.id]
        elif s.timing.instants is not None:
            inst = s.timing.instants
        out[s.id] = None if inst is None else {int(round(t / s.timing.tau)) for t in inst}
    return out


def run_closed_loop(network: NetworkModel, policy, x0: Mapping, horizon: float,
                    jump_schedule: Optional[Mapping] = None, substeps: int = 32) -> Trajectory:
    """Simulate the interconnection under ``policy(states, counters)``.

    ``policy`` returns either a product input index (over the finite input
    lists, lexicographic) or a list of per-subsystem input vectors.  At an
    instant in some jump set the jumps use the policy at the pre-jump state;
    the policy is queried again for the following flow period.
    """
    subs = network.subsystems
    ids = network.ids
    tau = subs[0].timing.tau
    K = int(round(horizon / tau))
    if abs(K * tau - horizon) > 1e-9 * max(1.0, horizon):
        raise StructureError("horizon must be a multiple of tau")
    ins = [input_points(s, 0.0) if not hasattr(s.external_inputs, "dim") else None for s in subs]
    labels = product_inputs(ins) if all(i is not None for i in ins) else None
    steps = jump_steps_from_schedule(network, jump_schedule)

    def vectors(out):
        if isinstance(out, (int, np.integer)):
            if labels is None:
                raise StructureError("an input index needs finite input lists")
            return int(out), [ins[k][labels[int(out)][k]] for k in range(len(subs))]
        return -1, [np.atleast_1d(np.asarray(v, dtype=float)) for v in out]

    n = int(_offsets(network)[-1])
    x = np.concatenate([np.atleast_1d(np.asarray(x0[sid], dtype=float)) for sid in ids])
    c = np.zeros(len(subs), dtype=int)
    m_total = sum(s.input_dim for s in subs)
    T, X, Xm, C, Jf, Uj, Uf, Wl, Uv = [], [], [], [], [], [], [], [], []
    phi_obs = np.zeros(len(subs))
    halted = None
    for k in range(K + 1):
        xm = x.copy()
        mask = np.zeros(len(subs), dtype=bool)
        for i, s in enumerate(subs):
            st = steps[s.id]
            due = (k in st) if st is not None else c[i] >= s.timing.z_max
            if due and k > 0:
                if c[i] < s.timing.z_min:
                    raise StructureError(f"jump of subsystem {s.id} at step {k} violates the minimum dwell")
                mask[i] = True
        uj = -1
        try:
            parts = list(_split(network, x).values())
            if mask.any():
                uj, uv = vectors(policy(parts, tuple(int(v) for v in c)))
                x = jump_step(network, x, mask, uv)
                c[mask] = 0
            T.append(k * tau)
            X.append(x.copy())
            Xm.append(xm)
            C.append(c.copy())
            Jf.append(mask.copy())
            Uj.append(uj)
            Wl.append(internal_inputs(network, x))
            if k == K:
                Uf.append(-1)
                Uv.append(np.full(m_total, np.nan))
                break
            if np.any(c >= np.array([s.timing.z_max for s in subs])):
                raise StructureError(f"schedule leaves a counter at z_max without a jump at step {k}")
            uf, uv = vectors(policy(list(_split(network, x).values()), tuple(int(v) for v in c)))
        except UnsafeRegionError as exc:
            halted = f"halted at t={k * tau:g}: {exc}"
            if len(Uf) < len(T):
                Uf.append(-1)
                Uv.append(np.full(m_total, np.nan))
            break
        Uf.append(uf)
        Uv.append(np.concatenate([np.ravel(v) for v in uv]))
        x, drift = flow_step(network, x, uv, substeps)
        phi_obs = np.maximum(phi_obs, drift)
        c = c + 1
    arr = lambda v, dt=float: np.array(v, dtype=dt)
    return Trajectory(arr(T), arr(X).reshape(-1, n), arr(Xm).reshape(-1, n), arr(C, int), arr(Jf, bool),
                      arr(Uj, int), arr(Uf, int), arr(Wl).reshape(len(T), -1), arr(Uv).reshape(len(T), -1),
                      phi_obs, ids, halted)


@dataclass
class EventRun:
    """Discrete-step run: ``x[k] -> x[k+1]`` by ``events[k]`` under input ``u[k]``.

    ``w[k]`` holds the internal inputs used at step k (concrete: neighbour
    outputs at the start of the step; abstract: the lattice values chosen).
    """

    x: np.ndarray
    counters: np.ndarray
    events: np.ndarray
    u: np.ndarray
    w: np.ndarray


@dataclass
class PairedRun:
    concrete: EventRun
    abstract: EventRun
    event_masks: np.ndarray


def _nearest_block(q, sl, y):
    eta = q.eta[sl]
    k = np.clip(np.ceil(y / eta - 0.5 - 1e-12).astype(np.int64), q.k_lo[sl], q.k_hi[sl])
    return k * eta


def _nearest_in_box(q, lo, hi, x):
    k = q.nearest_axis_index(x)
    return np.minimum(np.maximum(k, lo), hi)


def paired_run(composed, x0_grid: Sequence, steps: int, rng: np.random.Generator, controller=None,
               substeps: int = 32, flow_bias: float = 0.5) -> PairedRun:
    """Run the concrete network and the composed model side by side from a lattice point.

    Each step picks an enabled event (a flow with probability ``flow_bias``
    when allowed, otherwise a uniformly chosen enabled jump subset) and an
    input uniformly among those the controller admits (all inputs without a
    controller).  The concrete system applies the same input; the abstract
    successor is the lattice point of the successor box nearest the concrete
    successor, which exists by the eta_x-ball construction.
    """
    network = composed.network
    models = composed.models
    N = len(models)
    masks = composed.events
    offs = _offsets(network)
    q_off = np.cumsum([0] + [m.subsystem.internal_dim for m in models])
    labels = composed.input_labels
    xh = np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in x0_grid])
    x = xh.copy()
    c = np.zeros(N, dtype=int)
    X, XH, C, E, U, W, WH = [x.copy()], [xh.copy()], [c.copy()], [], [], [], []
    arena = composed.arena() if controller is not None else None
    for _ in range(steps):
        comp = [composed.models[k].qx.flat(composed.models[k].qx.nearest_axis_index(xh[offs[k]:offs[k + 1]])) *
                models[k].n_counters + c[k] for k in range(N)]
        enabled = [e for e in range(len(masks)) if composed.event_enabled(comp, e)]
        jumps = [e for e in enabled if masks[e].any()]
        if 0 in enabled and (not jumps or rng.random() < flow_bias):
            e = 0
        else:
            e = int(rng.choice(jumps))
        if controller is not None:
            idx = composed.encode(comp)
            cc, axis_idx = arena.decode_state(idx)
            g = int(np.ravel_multi_index(axis_idx, arena.grid_shape))
            allowed = np.nonzero(controller.policy[tuple(cc) + (g,)])[0]
            if not len(allowed):
                raise UnsafeRegionError("paired run left the winning set")
        else:
            allowed = np.arange(len(labels))
        u = int(rng.choice(allowed))
        uv = [models[k].inputs[labels[u][k]] for k in range(N)]
        w = internal_inputs(network, x)
        wh = np.zeros(int(q_off[-1]))
        pts = {m.subsystem.id: xh[offs[k]:offs[k + 1]] for k, m in enumerate(models)}
        for k, m in enumerate(models):
            sid = m.subsystem.id
            for j, sl in network.internal_layout(sid):
                y = network.by_id(j).output_matrix(sid) @ pts[j]
                wh[q_off[k] + sl.start:q_off[k] + sl.stop] = _nearest_block(m.qw, sl, y)
        mask = masks[e]
        if not mask.any():
            x_next, _ = flow_step(network, x, uv, substeps)
        else:
            x_next = jump_step(network, x, mask, uv)
        xh_next = xh.copy()
        c_next = c.copy()
        for k, m in enumerate(models):
            moves = not mask.any() or mask[k]
            if not moves:
                continue
            kind = JUMP if mask[k] else FLOW
            g = comp[k] // m.n_counters
            wflat = m.qw.flat(m.qw.nearest_axis_index(wh[q_off[k]:q_off[k + 1]])) if m.qw.box.dim else 0
            lo, hi = m.box(kind, g, wflat, labels[u][k])
            if np.any(lo > hi):
                raise StructureError(f"abstract successor set of component {m.subsystem.id} is empty")
            kidx = _nearest_in_box(m.qx, lo, hi, x_next[offs[k]:offs[k + 1]])
            xh_next[offs[k]:offs[k + 1]] = (kidx + m.qx.k_lo) * m.qx.eta
            c_next[k] = 0 if kind == JUMP else c[k] + 1
        X.append(x_next)
        XH.append(xh_next)
        C.append(c_next.copy())
        E.append(e)
        U.append(u)
        W.append(w)
        WH.append(wh)
        x, xh, c = x_next, xh_next, c_next
    C = np.array(C, dtype=int)
    E = np.array(E, dtype=int)
    U = np.array(U, dtype=int)
    conc = EventRun(np.array(X), C, E, U, np.array(W).reshape(len(E), -1))
    abst = EventRun(np.array(XH), C.copy(), E.copy(), U.copy(), np.array(WH).reshape(len(E), -1))
    return PairedRun(conc, abst, masks)


@dataclass
class MonitorReport:
    S: np.ndarray                 # (K+1, N) local values
    S_tilde: np.ndarray           # (K+1,)
    lsf1: np.ndarray              # (K+1, N, 2): lhs, rhs
    lsmf2: np.ndarray             # (K, N, 2); nan where the component stuttered
    sf1: np.ndarray               # (K+1, 2)
    sf2: np.ndarray               # (K, 2)
    tolerance: float
    violations: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        vals = [0.0]
        for arr in (self.lsf1, self.lsmf2, self.sf1, self.sf2):
            d = arr[..., 0] - arr[..., 1]
            d = d[~np.isnan(d)]
            if d.size:
                vals.append(float(d.max()))
        return max(vals)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def summary(self) -> str:
        parts = [f"{k}: {v}" for k, v in self.violations.items()]
        return (f"max violation {self.max_violation:.3g} (tolerance {self.tolerance:g}); "
                + ", ".join(parts) + f" -> {'pass' if self.passed else 'FAIL'}")

    def to_csv(self, path: str, ids: Sequence[int]) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step"] + [f"S{sid}" for sid in ids] + ["S_tilde", "sf2_bound"])
            for k in range(len(self.S_tilde)):
                bound = self.sf2[k - 1, 1] if k > 0 else float("nan")
                wr.writerow([k] + [f"{v:.12g}" for v in self.S[k]] + [f"{self.S_tilde[k]:.12g}", f"{bound:.12g}"])


def monitor_relation(concrete: EventRun, abstract: EventRun, certs: Sequence[CertificateBundle], psi,
                     network: NetworkModel, composed: Optional[ComposedAsf] = None,
                     tolerance: float = 1e-9) -> MonitorReport:
    """Evaluate the local and composed simulation-function inequalities step by step."""
    if concrete.x.shape != abstract.x.shape or not np.array_equal(concrete.counters, abstract.counters) \
            or not np.array_equal(concrete.events, abstract.events) or not np.array_equal(concrete.u, abstract.u):
        raise StructureError("concrete and abstract runs are not aligned")
    psi = np.asarray(psi, dtype=float)
    composed = composed or compose_parameters([b.local for b in certs], psi)
    subs = network.subsystems
    N = len(subs)
    offs = _offsets(network)
    q_off = np.cumsum([0] + [s.internal_dim for s in subs])
    masks = event_masks(N)
    K = len(concrete.events)
    S = np.zeros((K + 1, N))
    mismatch = np.zeros((K + 1, N))
    for k in range(K + 1):
        for i, (s, b) in enumerate(zip(subs, certs)):
            d = concrete.x[k, offs[i]:offs[i + 1]] - abstract.x[k, offs[i]:offs[i + 1]]
            v = float(np.max(np.abs(d))) if d.size else 0.0
            S[k, i] = b.value(v, int(concrete.counters[k, i]))
            H = s.output_matrix(s.id)
            mismatch[k, i] = float(np.max(np.abs(H @ d))) if H.size else 0.0
    S_t = np.array([compose_asf_value(row, psi) for row in S])
    lsf1 = np.stack([np.array([[b.local.alpha * mismatch[k, i] for i, b in enumerate(certs)] for k in range(K + 1)]),
                     S], axis=-1)
    sf1 = np.stack([composed.alpha * mismatch.max(axis=1), S_t], axis=-1)
    lsmf2 = np.full((K, N, 2), np.nan)
    sf2 = np.zeros((K, 2))
    for k in range(K):
        mask = masks[concrete.events[k]]
        du = 0.0  # refined input equals the abstract input
        for i, b in enumerate(certs):
            if mask.any() and not mask[i]:
                continue
            dw = concrete.w[k, q_off[i]:q_off[i + 1]] - abstract.w[k, q_off[i]:q_off[i + 1]]
            dw = float(np.max(np.abs(dw))) if dw.size else 0.0
            p = b.local
            lsmf2[k, i] = (S[k + 1, i], max(p.sigma * S[k, i], p.rho_w * dw, p.rho_u * du, p.eps))
        sf2[k] = (S_t[k + 1], max(composed.sigma * S_t[k], composed.rho_u * du, composed.eps))
    rep = MonitorReport(S, S_t, lsf1, lsmf2, sf1, sf2, tolerance)
    for name, arr in (("lsf1", lsf1), ("lsmf2", lsmf2), ("sf1", sf1), ("sf2", sf2)):
        d = arr[..., 0] - arr[..., 1]
        rep.violations[name] = int(np.sum(d[~np.isnan(d)] > tolerance))
    return rep


def gnuplot_script(csv_path: str, ids: Sequence[int], safe_bounds=(-5.0, 5.0), horizon: Optional[float] = None) -> str:
    """Script plotting every state against time with dashed safe bounds, one panel."""
    lo, hi = safe_bounds
    cols = ", \\\n     ".join(
        f"'{csv_path}' using 1:{k + 2} with lines lw 2 title 'x_{sid}'" for k, sid in enumerate(ids))
    xr = f"set xrange [0:{horizon:g}]\n" if horizon else ""
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead outside right\n"
        "set xlabel 't [s]'\nset ylabel 'state'\n"
        f"{xr}set yrange [{lo - 1:g}:{hi + 1:g}]\n"
        f"set arrow from graph 0, first {lo:g} to graph 1, first {lo:g} nohead dt 2\n"
        f"set arrow from graph 0, first {hi:g} to graph 1, first {hi:g} nohead dt 2\n"
        "set terminal pngcairo size 900,500\n"
        f"set output '{csv_path.rsplit('.', 1)[0]}.png'\n"
        f"plot {cols}\n"
    )
