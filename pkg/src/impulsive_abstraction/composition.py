"""Interconnection of per-subsystem symbolic models.

A component reads its internal input from the lattice of its internal-input
box; the admissible values at a composed state are the lattice points within
``Phi_ji`` of the neighbour output ``C_ji xh_j`` (one box per in-neighbour
block).  Successors of component i are the union over those values.

Two evaluation paths are provided.  ``successors`` enumerates exact Python
sets on demand.  ``arena`` precomputes, per product lattice point, the hull of
that union as an index box (flagging when the union is not itself a box) and
is what synthesis runs on.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .abstraction import FLOW, JUMP, Quantizer, SymbolicModel, product_inputs, _REL
from .arena import Arena, event_masks
from .errors import StructureError
from .model import NetworkModel, jump_window


@dataclass(frozen=True)
class CompositionConfig:
    """``phi[(j, i)]``: allowed mismatch between the internal input of i and ``y_ji``."""

    phi: Mapping = field(default_factory=dict)

    def __post_init__(self):
        phi = {(int(a), int(b)): float(v) for (a, b), v in dict(self.phi).items()}
        if any(v < 0 for v in phi.values()):
            raise StructureError("mismatch bounds must be nonnegative")
        object.__setattr__(self, "phi", phi)

    def resolve(self, network: NetworkModel, models: Sequence[SymbolicModel]) -> dict:
        """Fill missing edges with the receiving component's eta_w."""
        out = {}
        by_id = {m.subsystem.id: m for m in models}
        for j, i in sorted(network.edges):
            out[(j, i)] = self.phi.get((j, i), float(np.max(by_id[i].qw.eta)) if by_id[i].qw.box.dim else 0.0)
        extra = set(self.phi) - set(out)
        if extra:
            raise StructureError(f"mismatch bounds given for non-edges {sorted(extra)}")
        return out


def _block_ball(q: Quantizer, sl: slice, centre, radius):
    eta = q.eta[sl]
    k_lo, k_hi = q.k_lo[sl], q.k_hi[sl]
    r = radius * (1 + _REL)
    lo = np.ceil((centre - r) / eta - 1e-12).astype(np.int64)
    hi = np.floor((centre + r) / eta + 1e-12).astype(np.int64)
    return np.maximum(lo, k_lo) - k_lo, np.minimum(hi, k_hi) - k_lo


def admissible_internal_inputs(sid: int, points: Mapping, model: SymbolicModel, network: NetworkModel,
                               phi: Mapping) -> list:
    """Lattice internal inputs of ``sid`` compatible with neighbour lattice points.

    ``points`` maps each in-neighbour id to its lattice point ``xh_j``.  The
    result is the cartesian product over neighbour blocks, as value tuples in
    lexicographic order (empty if some block has no admissible value).
    """
    lo, hi = _admissible_index_box(sid, points, model, network, phi)
    if np.any(lo > hi):
        return []
    ranges = [range(int(a), int(b) + 1) for a, b in zip(lo, hi)]
    q = model.qw
    return [tuple(float(v) for v in (np.asarray(k, dtype=np.int64) + q.k_lo) * q.eta)
            for k in itertools.product(*ranges)]


def _admissible_index_box(sid, points, model, network, phi):
    q = model.qw
    lo = np.zeros(q.box.dim, dtype=np.int64)
    hi = np.zeros(q.box.dim, dtype=np.int64)
    for j, sl in network.internal_layout(sid):
        y = network.by_id(j).output_matrix(sid) @ np.asarray(points[j], dtype=float)
        lo[sl], hi[sl] = _block_ball(q, sl, y, phi[(j, sid)])
    return lo, hi


class ComposedModel:
    def __init__(self, models: Sequence[SymbolicModel], network: NetworkModel,
                 config: Optional[CompositionConfig] = None):
        self.models = list(models)
        self.network = network
        self.config = config or CompositionConfig()
        ids = [m.subsystem.id for m in self.models]
        if ids != network.ids:
            raise StructureError(f"component models {ids} do not match network order {network.ids}")
        taus = {m.timing.tau for m in self.models}
        if len(taus) != 1:
            raise StructureError(f"components use different tau values {sorted(taus)}")
        self.phi = self.config.resolve(network, self.models)
        self.events = event_masks(len(self.models))
        self.input_labels = product_inputs([m.inputs for m in self.models])
        self.state_counts = tuple(m.n_states for m in self.models)
        self._arena = None
        self.arena_seconds = 0.0

    @property
    def n_states(self) -> int:
        return int(np.prod(self.state_counts))

    @property
    def n_inputs(self) -> int:
        return len(self.input_labels)

    def encode(self, comp_states) -> int:
        return int(np.ravel_multi_index(tuple(int(s) for s in comp_states), self.state_counts))

    def decode(self, index: int) -> tuple:
        return tuple(int(s) for s in np.unravel_index(int(index), self.state_counts))

    def initial_states(self) -> list:
        firsts = [m.initial_states() for m in self.models]
        return sorted(self.encode(p) for p in itertools.product(*firsts))

    def output(self, index: int) -> list:
        return [m.output(s) for m, s in zip(self.models, self.decode(index))]

    def _points(self, comp_states) -> dict:
        return {m.subsystem.id: m.qx.point(s // m.n_counters) for m, s in zip(self.models, comp_states)}

    def admissible_inputs_of(self, k: int, comp_states) -> list:
        """Flat internal-input indices of component k admissible at ``comp_states``."""
        m = self.models[k]
        lo, hi = _admissible_index_box(m.subsystem.id, self._points(comp_states), m, self.network, self.phi)
        if np.any(lo > hi):
            return []
        return [m.qw.flat(p) for p in itertools.product(*[range(int(a), int(b) + 1) for a, b in zip(lo, hi)])]

    def event_enabled(self, comp_states, e: int) -> bool:
        mask = self.events[e]
        for m, s, jm in zip(self.models, comp_states, mask):
            c = s % m.n_counters
            win = jump_window(c, m.timing)
            if not mask.any() and not win.flow_allowed:
                return False
            if jm and not win.jump_allowed:
                return False
        return True

    def successors(self, index: int, u: int) -> list:
        """Lazy evaluation: ``[(event, frozenset of composed indices or None if blocked)]``."""
        comp = self.decode(index)
        labels = self.input_labels[u]
        out = []
        for e, mask in enumerate(self.events):
            if not self.event_enabled(comp, e):
                continue
            per = []
            blocked = False
            for k, (m, s) in enumerate(zip(self.models, comp)):
                g, c = divmod(s, m.n_counters)
                moves = not mask.any() or mask[k]
                if not moves:
                    per.append([s])
                    continue
                kind = JUMP if mask[k] else FLOW
                c2 = 0 if kind == JUMP else c + 1
                ws = self.admissible_inputs_of(k, comp)
                if not ws:
                    blocked = True
                    break
                union = set()
                for w in ws:
                    succ = m.grid_successors(kind, g, w, labels[k])
                    if not succ:
                        blocked = True
                        break
                    union.update(succ)
                if blocked:
                    break
                per.append(sorted(h * m.n_counters + c2 for h in union))
            if blocked:
                out.append((e, None))
            else:
                out.append((e, frozenset(self.encode(p) for p in itertools.product(*per))))
        return out

    def eager_successors(self, index: int, u: int) -> list:
        """Same query answered from the precomputed arena."""
        arena = self.arena()
        c, axis_idx = arena.decode_state(index)
        g = int(np.ravel_multi_index(axis_idx, arena.grid_shape)) if arena.grid_shape else 0
        out = []
        for e, succ in arena.successors(c, g, u):
            if succ is None:
                out.append((e, None))
            else:
                out.append((e, frozenset(arena.state_index(c2, p) for c2, p in succ)))
        return out

    def lazy_transition_table(self) -> np.ndarray:
        rows = []
        for s in range(self.n_states):
            for u in range(self.n_inputs):
                for e, succ in self.successors(s, u):
                    if succ is not None:
                        rows.extend((s, u, e, d) for d in succ)
        return np.array(sorted(rows), dtype=np.int64).reshape(-1, 4)

    # -- vectorized arena ----------------------------------------------------
    def arena(self) -> Arena:
        if self._arena is None:
            t0 = time.perf_counter()
            self._arena = self._build_arena()
            self.arena_seconds = time.perf_counter() - t0
        return self._arena

    def _build_arena(self) -> Arena:
        models = self.models
        grid_shape, owner = [], []
        for k, m in enumerate(models):
            grid_shape.extend(m.qx.shape)
            owner.extend([k] * m.subsystem.state_dim)
        grid_shape = tuple(grid_shape)
        G = int(np.prod(grid_shape)) if grid_shape else 1
        idx = np.indices(grid_shape).reshape(len(grid_shape), -1) if grid_shape else np.zeros((0, 1), np.int64)
        axes_of = [[d for d, o in enumerate(owner) if o == k] for k in range(len(models))]
        g_comp = [np.ravel_multi_index(tuple(idx[d] for d in axes_of[k]), models[k].qx.shape)
                  if axes_of[k] else np.zeros(G, np.int64) for k in range(len(models))]
        pts = {m.subsystem.id: m.qx.points()[g_comp[k]] for k, m in enumerate(models)}

        comp_boxes = []
        exact = True
        for k, m in enumerate(models):
            sid = m.subsystem.id
            q = m.qw
            wlo = np.zeros((G, q.box.dim), dtype=np.int64)
            whi = np.zeros((G, q.box.dim), dtype=np.int64)
            for j, sl in self.network.internal_layout(sid):
                y = pts[j] @ self.network.by_id(j).output_matrix(sid).T
                wlo[:, sl], whi[:, sl] = _block_ball(q, sl, y, self.phi[(j, sid)])
            none_admissible = np.any(wlo > whi, axis=1)
            per_kind = {}
            for kind in (FLOW, JUMP):
                lo, hi, blocked, ok = _union_over_inputs(m, kind, g_comp[k], wlo, whi, none_admissible)
                exact &= ok
                per_kind[kind] = (lo, hi, blocked)
            comp_boxes.append(per_kind)

        labels = self.input_labels
        lab = np.array(labels, dtype=np.int64).reshape(len(labels), len(models))
        E = len(self.events)
        D = len(grid_shape)
        lo = np.empty((G, len(labels), E, D), dtype=np.int64)
        hi = np.empty_like(lo)
        blocked = np.zeros((G, len(labels), E), dtype=bool)
        for e, mask in enumerate(self.events):
            for k, m in enumerate(models):
                ax = axes_of[k]
                moves = not mask.any() or mask[k]
                if not moves:
                    own = idx[ax].T if ax else np.zeros((G, 0), np.int64)
                    lo[:, :, e, ax] = own[:, None, :]
                    hi[:, :, e, ax] = own[:, None, :]
                    continue
                clo, chi, cb = comp_boxes[k][JUMP if mask[k] else FLOW]
                lo[:, :, e, ax] = clo[:, lab[:, k], :]
                hi[:, :, e, ax] = chi[:, lab[:, k], :]
                blocked[:, :, e] |= cb[:, lab[:, k]]
        return Arena(grid_shape, tuple(owner), tuple(m.timing.z_min for m in models),
                     tuple(m.timing.z_max for m in models), labels, self.events, lo, hi, blocked, exact)

    def statistics(self, reach_limit: int = 10_000_000) -> dict:
        arena = self.arena()
        stats = {"components": len(self.models), "composed_states": self.n_states,
                 "inputs": self.n_inputs, "events": len(self.events), "exact_union": arena.exact,
                 "initial_states": int(np.prod([m.n_grid for m in self.models]))}
        if self.n_states <= reach_limit:
            stats["reachable_states"] = int(reachable_states(arena).sum())
        else:
            stats["reachable_states"] = None
        return stats


def _union_over_inputs(m: SymbolicModel, kind: int, g, wlo, whi, none_admissible):
    """Hull of component successor boxes over the admissible internal-input box.

    Returns ``(lo, hi, blocked, exact)`` with lo/hi of shape ``(G, U, n)`` and
    blocked of shape ``(G, U)``.
    """
    G = len(g)
    U = m.n_inputs
    n = m.subsystem.state_dim
    q = m.qw
    big = np.iinfo(np.int64).max
    lo = np.full((G, U, n), big, dtype=np.int64)
    hi = np.full((G, U, n), -1, dtype=np.int64)
    blocked = np.repeat(none_admissible[:, None], U, axis=1)
    if q.box.dim == 0:
        L, H = m.lo[kind][g, 0], m.hi[kind][g, 0]
        blocked |= np.any(L > H, axis=-1)
        return L.copy(), H.copy(), blocked, True
    width = np.where(none_admissible[:, None], 0, whi - wlo + 1)
    K = width.max(axis=0)
    branches = []
    for off in itertools.product(*[range(int(k)) for k in K]):
        w = wlo + np.asarray(off, dtype=np.int64)
        valid = ~none_admissible & np.all(w <= whi, axis=1)
        wflat = np.ravel_multi_index(tuple(np.minimum(w, np.asarray(q.shape) - 1).T), q.shape)
        L, H = m.lo[kind][g, wflat], m.hi[kind][g, wflat]          # (G, U, n)
        empty = np.any(L > H, axis=-1)
        blocked |= valid[:, None] & empty
        use = (valid[:, None] & ~empty)[..., None]
        lo = np.where(use, np.minimum(lo, L), lo)
        hi = np.where(use, np.maximum(hi, H), hi)
        branches.append((L, H, use[..., 0]))
    exact = _union_is_box(branches, lo, hi, blocked, n)
    return lo, hi, blocked, exact


def _union_is_box(branches, lo, hi, blocked, n) -> bool:
    if len(branches) <= 1:
        return True
    live = ~blocked
    if n == 1:
        L = np.stack([b[0][..., 0] for b in branches])
        H = np.stack([b[1][..., 0] for b in branches])
        use = np.stack([b[2] for b in branches])
        big = np.iinfo(np.int64).max
        L = np.where(use, L, big)
        H = np.where(use, H, -1)
        order = np.argsort(L, axis=0, kind="stable")
        L = np.take_along_axis(L, order, axis=0)
        H = np.take_along_axis(H, order, axis=0)
        reach = np.maximum.accumulate(H, axis=0)
        gap = (L[1:] != big) & (L[1:] > reach[:-1] + 1)
        return not bool(np.any(gap & live[None]))
    # several dimensions: only identical boxes are certified exact
    for L, H, use in branches:
        same = np.all(L == lo, axis=-1) & np.all(H == hi, axis=-1)
        if np.any(use & live & ~same):
            return False
    return True


def compose(models: Sequence[SymbolicModel], network: NetworkModel,
            config: Optional[CompositionConfig] = None) -> ComposedModel:
    return ComposedModel(models, network, config)


def reachable_states(arena: Arena, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Forward reachable set ``(C..., G)`` from all counter-zero states (or ``initial``)."""
    N = arena.n_components
    C = arena.counter_shape
    G, U = arena.n_grid, arena.n_inputs
    shape = np.array(arena.grid_shape, dtype=np.int64)
    padded = shape + 1
    Gp = int(np.prod(padded))
    strides = np.array([int(np.prod(padded[d + 1:])) for d in range(len(shape))], dtype=np.int64)
    if initial is None:
        initial = np.zeros(C + (G,), dtype=bool)
        initial[(0,) * N] = True
    reach = initial.copy()
    frontier = initial.copy()
    valid = arena.valid()
    D = len(shape)
    corners = list(itertools.product((0, 1), repeat=D))
    n_c = int(np.prod(C))
    size = n_c * Gp
    while frontier.any():
        marks = np.zeros(size, dtype=np.int64)
        pending = {1: [], -1: []}

        def flush():
            nonlocal marks
            for sign, parts in pending.items():
                if parts:
                    marks += sign * np.bincount(np.concatenate(parts), minlength=size)
                    parts.clear()

        held = 0
        for e in range(len(arena.events)):
            cs = [c for c in itertools.product(*[range(z + 1) for z in arena.z_max])
                  if arena.event_enabled(c, e) and frontier[c].any()]
            for c in cs:
                gs = np.nonzero(frontier[c])[0]
                sel = valid[gs, :, e]
                gg, uu = np.nonzero(sel)
                if not len(gg):
                    continue
                lo = arena.lo[gs[gg], uu, e]
                hi1 = arena.hi[gs[gg], uu, e] + 1
                dest = int(np.ravel_multi_index(arena.counter_successor(c, e), C)) * Gp
                for corner in corners:
                    flat = np.full(len(gg), dest, dtype=np.int64)
                    for d, pick in enumerate(corner):
                        flat += (hi1[:, d] if pick else lo[:, d]) * strides[d]
                    pending[-1 if sum(corner) % 2 else 1].append(flat)
                    held += len(flat)
                if held > 1 << 23:
                    flush()
                    held = 0
        flush()
        cover = marks.reshape(C + tuple(padded))
        for ax in range(N, N + D):
            cover = np.cumsum(cover, axis=ax)
        cover = cover[(Ellipsis,) + tuple(slice(0, s) for s in shape)].reshape(C + (G,)) > 0
        frontier = cover & ~reach
        reach |= cover
    return reach
