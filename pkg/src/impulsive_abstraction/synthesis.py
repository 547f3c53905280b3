"""Maximal controlled-invariant sets and controller refinement.

The safety operator keeps a state when some input makes every enabled event
valid and lands every successor inside the current set.  Iterating it from
the safe set converges to the greatest fixed point in finitely many sweeps.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .abstraction import Quantizer
from .arena import Arena
from .errors import OutOfDomainError, StructureError, UnsafeRegionError
from .model import Box


@dataclass(frozen=True)
class SafeSet:
    """Per-subsystem boxes; counters are unconstrained."""

    boxes: Mapping

    def contains(self, states: Mapping, tol: float = 1e-9) -> bool:
        return all(self.boxes[sid].contains(x, tol) for sid, x in states.items())

    def shrink(self, margin: float) -> "SafeSet":
        out = {}
        for sid, b in self.boxes.items():
            lo, hi = b.lower + margin, b.upper - margin
            if np.any(lo > hi):
                raise StructureError(f"safe box of subsystem {sid} is empty after shrinking by {margin:g}")
            out[sid] = Box(lo, hi)
        return SafeSet(out)

    def grid_mask(self, arena: Arena, quantizers: Sequence[Quantizer], ids: Sequence[int]) -> np.ndarray:
        """``(G,)`` mask of product lattice points inside every box."""
        mask = np.ones(arena.grid_shape, dtype=bool)
        d = 0
        for sid, q in zip(ids, quantizers):
            b = self.boxes[sid]
            for a in range(q.box.dim):
                pts = q.axis_points(a)
                inside = (pts >= b.lower[a] - 1e-9) & (pts <= b.upper[a] + 1e-9)
                shape = [1] * len(arena.grid_shape)
                shape[d] = -1
                mask &= inside.reshape(shape)
                d += 1
        return mask.reshape(-1)


@dataclass
class ExplicitGame:
    """Generic finite game: ``branches[(s, u)]`` lists successor sets that must all be
    nonempty and inside the winning set.  Pairs absent from ``branches`` are unavailable."""

    n_states: int
    n_inputs: int
    branches: dict

    def admissible_inputs(self, W: np.ndarray) -> np.ndarray:
        ok = np.zeros((self.n_states, self.n_inputs), dtype=bool)
        win = set(np.nonzero(W)[0].tolist())
        for (s, u), succ in self.branches.items():
            ok[s, u] = all(b and set(b) <= win for b in succ)
        return ok


@dataclass
class SafetyController:
    winning: np.ndarray            # arena: (C..., G); explicit game: (S,)
    policy: np.ndarray             # winning shape + (U,)
    game: object
    iterations: int = 0
    removed: list = field(default_factory=list)
    seconds: float = 0.0
    quantizers: Optional[list] = None
    ids: Optional[list] = None

    @property
    def empty(self) -> bool:
        return not bool(self.winning.any())

    @property
    def size(self) -> int:
        return int(self.winning.sum())

    def closure_violations(self) -> int:
        """Number of (winning state, policy input) pairs with a successor outside the set."""
        ok = self.game.admissible_inputs(self.winning)
        return int((self.policy & ~ok).sum())

    def is_fixed_point(self) -> bool:
        ok = self.game.admissible_inputs(self.winning)
        return bool(np.array_equal(self.winning & ok.any(axis=-1), self.winning))

    def winning_indices(self) -> np.ndarray:
        """Sorted state indices (composed numbering for arenas)."""
        if isinstance(self.game, Arena):
            return np.sort(self.game.state_indices()[self.winning])
        return np.nonzero(self.winning)[0]

    def table(self):
        """``(state indices, policy rows)`` sorted by state index."""
        if isinstance(self.game, Arena):
            idx = self.game.state_indices()[self.winning]
            rows = self.policy[self.winning]
        else:
            idx = np.nonzero(self.winning)[0]
            rows = self.policy[self.winning]
        order = np.argsort(idx, kind="stable")
        return idx[order], rows[order]


def safety_fixed_point(game, safe) -> SafetyController:
    """Greatest fixed point of ``W -> {x in W | exists u admissible for W}`` from ``safe``.

    ``game`` is an :class:`Arena`, an :class:`ExplicitGame`, or anything with an
    ``arena()`` method.  ``safe`` is a boolean mask over the game's states
    (for arenas a ``(G,)`` lattice mask or a full ``(C..., G)`` mask).
    """
    t0 = time.perf_counter()
    if hasattr(game, "arena") and not isinstance(game, (Arena, ExplicitGame)):
        game = game.arena()
    if isinstance(game, Arena):
        shape = game.counter_shape + (game.n_grid,)
        W = np.broadcast_to(np.asarray(safe, dtype=bool), shape).copy()
    else:
        W = np.asarray(safe, dtype=bool).reshape(game.n_states).copy()
    removed = []
    iterations = 0
    while True:
        iterations += 1
        ok = game.admissible_inputs(W)
        W_next = W & ok.any(axis=-1)
        gone = int(W.sum() - W_next.sum())
        removed.append(gone)
        W = W_next
        if gone == 0:
            break
    policy = ok & W[..., None]
    return SafetyController(W, policy, game, iterations, removed, time.perf_counter() - t0)


@dataclass
class ConcretePolicy:
    """State feedback on the concrete network built from a controller on an arena."""

    controller: SafetyController
    quantizers: list
    ids: list

    def grid_index(self, states: Sequence) -> int:
        arena = self.controller.game
        axis_idx = []
        for q, x in zip(self.quantizers, states):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            if not q.box.contains(x):
                raise UnsafeRegionError(f"state {x} outside the abstraction domain {q.box.intervals()}")
            axis_idx.extend(int(k) for k in q.nearest_axis_index(x))
        return int(np.ravel_multi_index(axis_idx, arena.grid_shape)) if axis_idx else 0

    def admissible(self, states: Sequence, counters: Sequence[int]) -> np.ndarray:
        g = self.grid_index(states)
        c = tuple(int(v) for v in counters)
        if not self.controller.winning[c + (g,)]:
            raise UnsafeRegionError(f"quantized state (c={c}, g={g}) is not in the winning set")
        return np.nonzero(self.controller.policy[c + (g,)])[0]

    def __call__(self, states: Sequence, counters: Sequence[int]) -> int:
        """Lexicographically smallest admissible product input index."""
        return int(self.admissible(states, counters)[0])

    def input_values(self, u: int, inputs: Sequence[np.ndarray]) -> list:
        labels = self.controller.game.input_labels[u]
        return [np.asarray(inputs[k][labels[k]], dtype=float) for k in range(len(labels))]


def refine_controller(ctrl: SafetyController, quantizers: Optional[Sequence[Quantizer]] = None,
                      ids: Optional[Sequence[int]] = None) -> ConcretePolicy:
    if ctrl.empty:
        raise UnsafeRegionError("winning set is empty; nothing to refine")
    if not isinstance(ctrl.game, Arena):
        raise StructureError("refinement needs a controller computed on a network arena")
    quantizers = list(quantizers if quantizers is not None else ctrl.quantizers)
    ids = list(ids if ids is not None else ctrl.ids)
    return ConcretePolicy(ctrl, quantizers, ids)


def synthesize(model, safe: SafeSet) -> SafetyController:
    """Fixed point on a composed or monolithic model with the safe boxes as the initial set."""
    if hasattr(model, "models"):
        quantizers = [m.qx for m in model.models]
        ids = [m.subsystem.id for m in model.models]
    else:
        quantizers = list(model.quantizers)
        ids = model.network.ids
    arena = model.arena() if callable(getattr(model, "arena", None)) else model.arena
    mask = safe.grid_mask(arena, quantizers, ids)
    ctrl = safety_fixed_point(arena, mask)
    ctrl.quantizers = quantizers
    ctrl.ids = ids
    return ctrl
