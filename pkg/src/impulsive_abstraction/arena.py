"""Factored safety game shared by the composed and monolithic abstractions.

A network state is a tuple of counters ``c = (c_1..c_N)`` together with a point
of the product state lattice, indexed by ``g``.  An event is either a global
flow (every counter advances) or a jump of a nonempty subset J of components
(counters in J reset, everything outside J stutters).  For every
``(g, input, event)`` the successor lattice points form an axis-aligned box of
lattice indices ``[lo, hi]``; the counter successor only depends on ``c`` and
the event.  This is what lets the safety operator run on whole arrays.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def event_masks(n: int) -> np.ndarray:
    """Row 0 is the flow event (all False); then every nonempty jump subset."""
    rows = [m for m in itertools.product((False, True), repeat=n)]
    return np.array(rows, dtype=bool).reshape(len(rows), n)


@dataclass
class Arena:
    grid_shape: tuple            # lattice points per state axis
    axis_owner: tuple            # component position owning each axis (grouped, ascending)
    z_min: tuple
    z_max: tuple
    input_labels: list           # one tuple of per-component input indices per product input
    events: np.ndarray           # (E, N) jump masks
    lo: np.ndarray               # (G, U, E, D)
    hi: np.ndarray
    blocked: np.ndarray          # (G, U, E)
    exact: bool = True
    _corners: dict = field(default_factory=dict, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.z_max)

    @property
    def counter_shape(self) -> tuple:
        return tuple(z + 1 for z in self.z_max)

    @property
    def n_grid(self) -> int:
        return int(np.prod(self.grid_shape)) if self.grid_shape else 1

    @property
    def n_inputs(self) -> int:
        return len(self.input_labels)

    @property
    def n_states(self) -> int:
        return self.n_grid * int(np.prod(self.counter_shape))

    def component_axes(self, i: int) -> list:
        return [d for d, o in enumerate(self.axis_owner) if o == i]

    def component_grid_shape(self, i: int) -> tuple:
        return tuple(self.grid_shape[d] for d in self.component_axes(i))

    def valid(self) -> np.ndarray:
        """``(G, U, E)``: the event's successor set is nonempty and not blocked."""
        return ~self.blocked & np.all(self.lo <= self.hi, axis=-1)

    def event_enabled(self, c, e: int) -> bool:
        mask = self.events[e]
        if not mask.any():
            return all(ci <= z - 1 for ci, z in zip(c, self.z_max))
        return all(ci >= zl for ci, zl, m in zip(c, self.z_min, mask) if m)

    def counter_successor(self, c, e: int) -> tuple:
        mask = self.events[e]
        if not mask.any():
            return tuple(ci + 1 for ci in c)
        return tuple(0 if m else ci for ci, m in zip(c, mask))

    # -- state indexing ------------------------------------------------------
    def component_state_counts(self) -> tuple:
        return tuple(int(np.prod(self.component_grid_shape(i))) * (self.z_max[i] + 1)
                     for i in range(self.n_components))

    def state_index(self, c, axis_idx) -> int:
        """Row-major index over component states ``s_i = g_i (z_max_i + 1) + c_i``."""
        s = []
        for i in range(self.n_components):
            axes = self.component_axes(i)
            gi = int(np.ravel_multi_index([axis_idx[d] for d in axes], self.component_grid_shape(i))) if axes else 0
            s.append(gi * (self.z_max[i] + 1) + int(c[i]))
        return int(np.ravel_multi_index(s, self.component_state_counts()))

    def decode_state(self, index: int):
        s = np.unravel_index(int(index), self.component_state_counts())
        c, axis_idx = [], [0] * len(self.grid_shape)
        for i in range(self.n_components):
            gi, ci = divmod(int(s[i]), self.z_max[i] + 1)
            c.append(ci)
            axes = self.component_axes(i)
            if axes:
                for d, k in zip(axes, np.unravel_index(gi, self.component_grid_shape(i))):
                    axis_idx[d] = int(k)
        return tuple(c), tuple(axis_idx)

    def state_indices(self) -> np.ndarray:
        """Array of composed indices with shape ``counter_shape + (G,)``."""
        comp_counts = self.component_state_counts()
        grid = np.indices(self.grid_shape).reshape(len(self.grid_shape), -1) if self.grid_shape else np.zeros((0, 1), int)
        total = np.zeros(self.counter_shape + (self.n_grid,), dtype=np.int64)
        cidx = np.indices(self.counter_shape)
        for i in range(self.n_components):
            axes = self.component_axes(i)
            if axes:
                gi = np.ravel_multi_index(tuple(grid[d] for d in axes), self.component_grid_shape(i))
            else:
                gi = np.zeros(self.n_grid, dtype=np.int64)
            si = gi[None] * (self.z_max[i] + 1) + cidx[i][..., None]
            stride = int(np.prod(comp_counts[i + 1:]))
            total += si * stride
        return total

    # -- explicit enumeration (small instances) -------------------------------
    def successors(self, c, g: int, u: int):
        """``[(event, frozenset of (c', axis_idx'))]`` for enabled events, None if invalid."""
        out = []
        valid = self.valid()
        for e in range(len(self.events)):
            if not self.event_enabled(c, e):
                continue
            if not valid[g, u, e]:
                out.append((e, None))
                continue
            c2 = self.counter_successor(c, e)
            ranges = [range(int(a), int(b) + 1) for a, b in zip(self.lo[g, u, e], self.hi[g, u, e])]
            out.append((e, frozenset((c2, p) for p in itertools.product(*ranges))))
        return out

    def transition_table(self) -> np.ndarray:
        """Rows ``(src, input, event, dst)`` over composed state indices, sorted."""
        rows = []
        grid_pts = list(itertools.product(*[range(s) for s in self.grid_shape]))
        for c in itertools.product(*[range(z + 1) for z in self.z_max]):
            for g, p in enumerate(grid_pts):
                src = self.state_index(c, p)
                for u in range(self.n_inputs):
                    for e, succ in self.successors(c, g, u):
                        if succ is None:
                            continue
                        for c2, p2 in succ:
                            rows.append((src, u, e, self.state_index(c2, p2)))
        arr = np.array(sorted(rows), dtype=np.int64).reshape(-1, 4)
        return arr

    def transition_count(self) -> int:
        """Number of (src, input, event, dst) transitions, counted without enumeration."""
        sizes = np.prod(np.maximum(self.hi - self.lo + 1, 0), axis=-1) * self.valid()
        per_event = sizes.sum(axis=(0, 1))
        total = 0
        for e in range(len(self.events)):
            total += int(per_event[e]) * self._enabled_counter_count(e)
        return total

    def _enabled_counter_count(self, e: int) -> int:
        mask = self.events[e]
        n = 1
        for m, zl, z in zip(mask, self.z_min, self.z_max):
            if not mask.any():
                n *= z
            else:
                n *= (z - zl + 1) if m else (z + 1)
        return n

    # -- safety operator ------------------------------------------------------
    def _corner_tables(self):
        if self._corners:
            return self._corners
        shape = np.array(self.grid_shape, dtype=np.int64)
        padded = shape + 1
        strides = np.array([int(np.prod(padded[d + 1:])) for d in range(len(shape))], dtype=np.int64)
        lo = np.clip(self.lo, 0, shape).astype(np.int64)
        hi1 = np.clip(self.hi + 1, 0, shape).astype(np.int64)
        valid = self.valid()
        D = len(shape)
        for e in range(len(self.events)):
            idx, sign = [], []
            for corner in itertools.product((0, 1), repeat=D):
                flat = np.zeros(lo.shape[:2], dtype=np.int64)
                for d, pick in enumerate(corner):
                    flat += (hi1[:, :, e, d] if pick else lo[:, :, e, d]) * strides[d]
                idx.append(flat.reshape(-1))
                sign.append(1 if (D - sum(corner)) % 2 == 0 else -1)
            self._corners[e] = (idx, sign, valid[:, :, e])
        return self._corners

    def admissible_inputs(self, W: np.ndarray) -> np.ndarray:
        """``(C..., G, U)``: every enabled event is valid and lands inside W."""
        N = self.n_components
        C = self.counter_shape
        G, U = self.n_grid, self.n_inputs
        bad = (~W).reshape(C + tuple(self.grid_shape)).astype(np.int32)
        P = bad
        for ax in range(N, N + len(self.grid_shape)):
            P = np.cumsum(P, axis=ax, dtype=np.int32)
        pad = [(0, 0)] * N + [(1, 0)] * len(self.grid_shape)
        P = np.pad(P, pad).reshape(C + (-1,))
        ok = np.ones(C + (G, U), dtype=bool)
        tables = self._corner_tables()
        for e, mask in enumerate(self.events):
            idx, sign, valid = tables[e]
            if not mask.any():
                dest = P[tuple(slice(1, None) for _ in range(N))]
                src = tuple(slice(0, z) for z in self.z_max)
                count = _gather(dest, idx, sign).reshape(dest.shape[:N] + (G, U))
                ok[src] &= (count == 0) & valid
            else:
                sel = tuple(0 if m else slice(None) for m in mask)
                dest = P[sel]
                count = _gather(dest, idx, sign).reshape(dest.shape[:-1] + (G, U))
                expand = tuple(None if m else slice(None) for m in mask)
                src = tuple(slice(zl, None) if m else slice(None) for m, zl in zip(mask, self.z_min))
                ok[src] &= ((count == 0) & valid)[expand]
        return ok


def _gather(P, idx, sign):
    total = None
    for k, s in zip(idx, sign):
        part = np.take(P, k, axis=-1)
        if total is None:
            total = part if s > 0 else -part
        elif s > 0:
            total += part
        else:
            total -= part
    return total
