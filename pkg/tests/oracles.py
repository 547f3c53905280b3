"""Brute-force reference implementations used as test oracles.

Everything here is written from the definitions with plain Python loops and
sets.  Nothing calls into the package's successor, composition or game code.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm

SLACK = 1e-9


def lattice(lo, hi, eta):
    return [k * eta for k in range(math.ceil(lo / eta - 1e-9), math.floor(hi / eta + 1e-9) + 1)]


def box_lattice(lower, upper, eta):
    """Row-major list of lattice points (tuples) of a box."""
    axes = [lattice(a, b, eta) for a, b in zip(lower, upper)]
    return [tuple(p) for p in itertools.product(*axes)]


def within(p, centre, radius):
    return all(abs(a - b) <= radius * (1 + SLACK) for a, b in zip(p, centre))


def scalar_flow(a, v, x, tau):
    if a * tau == 0:
        return x + v * tau
    return math.exp(a * tau) * x + v * (math.expm1(a * tau) / a)


def matrix_flow(A, v, x, tau):
    """``x(tau)`` of ``x' = A x + v`` for invertible A."""
    A = np.asarray(A, dtype=float)
    E = expm(A * tau)
    return E @ np.asarray(x, dtype=float) + np.linalg.solve(A, (E - np.eye(len(A))) @ np.asarray(v, dtype=float))


class SubsystemOracle:
    """Successor sets of one subsystem, straight from the nominal-point rule."""

    def __init__(self, sub, eta_x, eta_w=None):
        self.sub = sub
        self.eta = eta_x
        self.eta_w = eta_x if eta_w is None else eta_w
        self.X = box_lattice(sub.state_box.lower, sub.state_box.upper, eta_x)
        self.W = box_lattice(sub.internal_input_box.lower, sub.internal_input_box.upper, self.eta_w) \
            if sub.internal_dim else [()]
        self.U = [tuple(np.ravel(u)) for u in sub.external_inputs]
        self.zl, self.zh = sub.timing.z_min, sub.timing.z_max

    def nominal(self, kind, x, w, u):
        dyn = self.sub.flow if kind == 0 else self.sub.jump
        v = dyn.B @ np.asarray(w, dtype=float) + dyn.D @ np.asarray(u, dtype=float) + dyn.bias \
            if len(w) else dyn.D @ np.asarray(u, dtype=float) + dyn.bias
        if kind == 1:
            return tuple(dyn.A @ np.asarray(x, dtype=float) + v)
        if self.sub.state_dim == 1:
            return (scalar_flow(float(dyn.A[0, 0]), float(v[0]), x[0], self.sub.timing.tau),)
        return tuple(matrix_flow(dyn.A, v, x, self.sub.timing.tau))

    def grid_successors(self, kind, g, w, u):
        nom = self.nominal(kind, self.X[g], self.W[w], self.U[u])
        return [h for h, p in enumerate(self.X) if within(p, nom, self.eta)]

    def table(self):
        rows = []
        C = self.zh + 1
        for g in range(len(self.X)):
            for c in range(C):
                s = g * C + c
                for w in range(len(self.W)):
                    for u in range(len(self.U)):
                        if c <= self.zh - 1:
                            rows += [(s, w, u, 0, h * C + c + 1) for h in self.grid_successors(0, g, w, u)]
                        if c >= self.zl:
                            rows += [(s, w, u, 1, h * C) for h in self.grid_successors(1, g, w, u)]
        return np.array(sorted(rows), dtype=np.int64).reshape(-1, 5)


def events(n):
    return list(itertools.product((False, True), repeat=n))


def event_enabled(counters, zl, zh, mask):
    if not any(mask):
        return all(c <= z - 1 for c, z in zip(counters, zh))
    return all(c >= l for c, l, m in zip(counters, zl, mask) if m)


class ComposedOracle:
    """Composed transition relation over scalar-output neighbour blocks.

    A composed state is a tuple of component states ``g_i (z_i + 1) + c_i``,
    numbered row-major.  ``branches[(s, u)]`` lists, per enabled event, the
    successor set (empty when some admissible internal input gives no
    successor or no internal input is admissible).
    """

    def __init__(self, network, eta_x, eta_w=None, phi=None):
        self.net = network
        self.subs = list(network.subsystems)
        self.comp = [SubsystemOracle(s, eta_x, eta_w) for s in self.subs]
        self.phi = phi or {}
        self.counts = [len(o.X) * (o.zh + 1) for o in self.comp]
        self.labels = list(itertools.product(*[range(len(o.U)) for o in self.comp]))
        self.events = events(len(self.subs))

    def encode(self, parts):
        idx = 0
        for p, n in zip(parts, self.counts):
            idx = idx * n + p
        return idx

    def admissible_w(self, k, grid_pts):
        sub, o = self.subs[k], self.comp[k]
        if not sub.internal_dim:
            return [0]
        centres, radii = [], []
        for j in self.net.in_neighbors(sub.id):
            src = self.net.index(j)
            C = self.subs[src].output_matrix(sub.id)
            y = C @ np.asarray(grid_pts[src], dtype=float)
            centres.extend(y.tolist())
            default = o.eta_w
            radii.extend([self.phi.get((j, sub.id), default)] * len(y))
        return [w for w, p in enumerate(o.W)
                if all(abs(a - b) <= r * (1 + SLACK) for a, b, r in zip(p, centres, radii))]

    def branches(self):
        out = {}
        comps = self.comp
        ranges = [range(n) for n in self.counts]
        for parts in itertools.product(*ranges):
            s = self.encode(parts)
            gc = [divmod(p, o.zh + 1) for p, o in zip(parts, comps)]
            counters = [c for _, c in gc]
            pts = [o.X[g] for (g, _), o in zip(gc, comps)]
            for u, lab in enumerate(self.labels):
                br = []
                for e, mask in enumerate(self.events):
                    if not event_enabled(counters, [o.zl for o in comps], [o.zh for o in comps], mask):
                        continue
                    per = []
                    ok = True
                    for k, o in enumerate(comps):
                        g, c = gc[k]
                        if any(mask) and not mask[k]:
                            per.append([parts[k]])
                            continue
                        kind = 1 if mask[k] else 0
                        c2 = 0 if kind else c + 1
                        ws = self.admissible_w(k, pts)
                        union = set()
                        for w in ws:
                            hs = o.grid_successors(kind, g, w, lab[k])
                            if not hs:
                                ok = False
                            union.update(hs)
                        if not ws or not ok:
                            ok = False
                            break
                        per.append(sorted(h * (o.zh + 1) + c2 for h in union))
                    succ = {self.encode(p) for p in itertools.product(*per)} if ok else set()
                    br.append((e, succ))
                out[(s, u)] = br
        return out

    def table(self, branches=None):
        branches = branches or self.branches()
        rows = [(s, u, e, d) for (s, u), br in branches.items() for e, succ in br for d in succ]
        return np.array(sorted(rows), dtype=np.int64).reshape(-1, 4)


class MonolithicOracle(ComposedOracle):
    """Monolithic relation of a scalar network: coupled flow, exact stutter."""

    def _flow_matrix(self):
        n = len(self.subs)
        A = np.zeros((n, n))
        for i, s in enumerate(self.subs):
            A[i, i] = s.flow.A[0, 0]
            for col, j in enumerate(self.net.in_neighbors(s.id)):
                A[i, self.net.index(j)] += s.flow.B[0, col] * self.subs[self.net.index(j)].output_matrix(s.id)[0, 0]
        return A

    def branches(self):
        A = self._flow_matrix()
        tau = self.subs[0].timing.tau
        E = expm(A * tau)
        n = len(self.subs)
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = A
        M[:n, n:] = np.eye(n)
        Gam = expm(M * tau)[:n, n:]
        out = {}
        comps = self.comp
        for parts in itertools.product(*[range(c) for c in self.counts]):
            s = self.encode(parts)
            gc = [divmod(p, o.zh + 1) for p, o in zip(parts, comps)]
            counters = [c for _, c in gc]
            x = np.array([o.X[g][0] for (g, _), o in zip(gc, comps)])
            for u, lab in enumerate(self.labels):
                uv = np.array([comps[k].U[lab[k]][0] * self.subs[k].flow.D[0, 0] for k in range(n)])
                br = []
                for e, mask in enumerate(self.events):
                    if not event_enabled(counters, [o.zl for o in comps], [o.zh for o in comps], mask):
                        continue
                    if not any(mask):
                        nom = E @ x + Gam @ uv
                    else:
                        nom = x.copy()
                        for k, sub in enumerate(self.subs):
                            if mask[k]:
                                v = sub.jump.A[0, 0] * x[k] + sub.jump.D[0, 0] * comps[k].U[lab[k]][0]
                                for col, j in enumerate(self.net.in_neighbors(sub.id)):
                                    src = self.net.index(j)
                                    v += sub.jump.B[0, col] * self.subs[src].output_matrix(sub.id)[0, 0] * x[src]
                                nom[k] = v
                    per = []
                    for k, o in enumerate(comps):
                        g, c = gc[k]
                        if any(mask) and not mask[k]:
                            per.append([parts[k]])
                            continue
                        c2 = 0 if mask[k] else c + 1
                        hs = [h for h, p in enumerate(o.X) if abs(p[0] - nom[k]) <= o.eta * (1 + SLACK)]
                        per.append([h * (o.zh + 1) + c2 for h in hs])
                    br.append((e, {self.encode(p) for p in itertools.product(*per)}))
                out[(s, u)] = br
        return out


def safety_fixed_point(n_states, branches, safe):
    """Greatest fixed point by plain set iteration; returns (winning set, policy dict)."""
    W = set(s for s in range(n_states) if safe(s))
    inputs = sorted({u for _, u in branches})
    while True:
        keep = set()
        for s in W:
            if any(all(succ and succ <= W for _, succ in branches.get((s, u), [(None, set())])) for u in inputs):
                keep.add(s)
        if keep == W:
            break
        W = keep
    policy = {s: [u for u in inputs if all(succ and succ <= W for _, succ in branches.get((s, u), [(None, set())]))]
              for s in W}
    return W, policy


def largest_invariant_by_subsets(n_states, branches, safe):
    """Union of all controlled-invariant subsets of the safe states (exponential)."""
    pool = [s for s in range(n_states) if safe(s)]
    inputs = sorted({u for _, u in branches})
    best = set()
    for r in range(len(pool) + 1):
        for sub in itertools.combinations(pool, r):
            S = set(sub)
            if all(any(all(succ and succ <= S for _, succ in branches.get((s, u), [(None, set())]))
                       for u in inputs) for s in S):
                best |= S
    return best


def simple_cycles(n, edges):
    """All simple cycles of a digraph given as ``{(i, j)}``, by DFS from the smallest vertex."""
    out = []
    adj = {i: sorted(j for a, j in edges if a == i) for i in range(n)}

    def dfs(start, v, path, seen):
        for w in adj[v]:
            if w == start:
                out.append(list(path))
            elif w > start and w not in seen:
                seen.add(w)
                path.append(w)
                dfs(start, w, path, seen)
                path.pop()
                seen.discard(w)

    for s in range(n):
        dfs(s, s, [s], {s})
    return out
