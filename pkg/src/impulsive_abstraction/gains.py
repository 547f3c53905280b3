"""Gain graph, small-gain cycle condition and scaling vector.

With linear gains the cycle condition ``gamma_{i1 i2} ... gamma_{ir i1} < 1``
becomes "every cycle of the log-gain graph has negative weight", which is a
negative-cycle question on the graph weighted by ``-log(gamma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .certificates import ComposedAsf, LocalAsfParams
from .errors import SmallGainError, StructureError

# cycles whose log-product lies within this margin of zero count as violations
LOG_MARGIN = 1e-12
MAX_ENUMERATED = 12


@dataclass(frozen=True)
class GainMatrix:
    """``gamma[i][j]``: gain from subsystem j into subsystem i (positions, not ids)."""

    gamma: np.ndarray
    ids: tuple
    form: str = "additive"

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def edges(self):
        """Off-diagonal nonzero entries as ``(i, j, gamma_ij)``, row-major."""
        n = self.n
        return [(i, j, float(self.gamma[i, j])) for i in range(n) for j in range(n)
                if i != j and self.gamma[i, j] > 0]

    def format(self) -> str:
        head = "      " + " ".join(f"{sid:>9}" for sid in self.ids)
        rows = [f"{sid:>5} " + " ".join(f"{v:9.5g}" for v in row) for sid, row in zip(self.ids, self.gamma)]
        return "\n".join([head] + rows)


def build_gain_matrix(locals_: Sequence[LocalAsfParams], edges, ids: Sequence[int],
                      form: str = "additive") -> GainMatrix:
    """Gain matrix with ``gamma_ii = sigma_i`` and ``gamma_ij = rho_w_i / alpha_j`` on edges j -> i.

    ``form="additive"`` uses the additive-form coefficients (sigma_bar,
    rho_w_bar); ``form="max"`` the max-form ones.
    """
    if form not in ("additive", "max"):
        raise StructureError(f"unknown gain form {form!r}")
    ids = tuple(ids)
    if len(locals_) != len(ids):
        raise StructureError("need one set of local parameters per subsystem")
    pos = {sid: k for k, sid in enumerate(ids)}
    n = len(ids)
    g = np.zeros((n, n))
    for k, p in enumerate(locals_):
        g[k, k] = p.sigma_bar if form == "additive" else p.sigma
    for j_id, i_id in edges:
        i, j = pos[i_id], pos[j_id]
        if i == j:
            continue
        alpha_j = locals_[j].alpha
        if alpha_j <= 0:
            raise StructureError(f"alpha of subsystem {j_id} must be positive")
        rho = locals_[i].rho_w_bar if form == "additive" else locals_[i].rho_w
        g[i, j] = rho / alpha_j
    g.setflags(write=False)
    return GainMatrix(g, ids, form)


def bellman_ford(n: int, arcs, source: Optional[int] = None):
    """Shortest distances from a virtual source joined to every node by 0-weight arcs.

    ``arcs`` is a list of ``(u, v, w)``.  Returns ``(dist, cycle)`` where
    ``cycle`` is a list of nodes on a negative cycle (in traversal order) or
    None.
    """
    dist = [0.0] * n
    pred = [None] * n
    if source is not None:
        dist = [math.inf] * n
        dist[source] = 0.0
    last = None
    for _ in range(n):
        last = None
        for u, v, w in arcs:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                pred[v] = u
                last = v
        if last is None:
            return dist, None
    # a relaxation in the n-th round: walk back n steps to land on the cycle
    v = last
    for _ in range(n):
        v = pred[v]
    cycle = [v]
    u = pred[v]
    while u != v:
        cycle.append(u)
        u = pred[u]
    cycle.reverse()
    return dist, cycle


def _canonical(cycle) -> tuple:
    k = cycle.index(min(cycle))
    return tuple(cycle[k:] + cycle[:k])


def cycle_product(gamma: np.ndarray, cycle) -> float:
    """Product of gains around ``cycle`` read as i1 <- i2 <- ... <- ir <- i1."""
    r = len(cycle)
    return float(np.prod([gamma[cycle[k], cycle[(k + 1) % r]] for k in range(r)]))


def _simple_cycles(gamma: np.ndarray):
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(range(gamma.shape[0]))
    for i, j in zip(*np.nonzero(gamma)):
        if i != j:
            # arc i -> j when gamma_ij > 0 so cycles read i1 <- i2 ... as products gamma_{i1 i2}...
            g.add_edge(int(i), int(j))
    return [_canonical(c) for c in nx.simple_cycles(g)]


@dataclass(frozen=True)
class SmallGainReport:
    holds: bool
    diagonal_ok: bool
    witness: Optional[tuple]               # a violating cycle (positions), if any
    witness_product: Optional[float]
    worst_cycle: Optional[tuple]           # worst off-diagonal cycle (positions)
    worst_product: Optional[float]
    ids: tuple = ()

    def label(self, cycle) -> str:
        if cycle is None:
            return "-"
        return "(" + ",".join(str(self.ids[k]) for k in cycle) + ")"

    def __str__(self):
        lines = [f"small-gain condition: {'holds' if self.holds else 'FAILS'}"]
        if self.worst_cycle is not None:
            lines.append(f"worst off-diagonal cycle {self.label(self.worst_cycle)} product {self.worst_product:.6g}")
        else:
            lines.append("no off-diagonal cycles")
        if not self.holds:
            lines.append(f"witness cycle {self.label(self.witness)} product {self.witness_product:.6g}")
        return "\n".join(lines)


def check_small_gain(g: GainMatrix) -> SmallGainReport:
    gamma = g.gamma
    n = g.n
    diag = [k for k in range(n) if not gamma[k, k] < 1]
    arcs = []
    for i, j, v in g.edges():
        # arc j -> i carries -log(gamma_ij); a nonpositive cycle is a violation
        arcs.append((j, i, -math.log(v) - LOG_MARGIN))
    _, neg = bellman_ford(n, arcs)
    holds = not diag and neg is None

    worst, worst_p = None, None
    if n <= MAX_ENUMERATED:
        for cyc in _simple_cycles(gamma):
            p = cycle_product(gamma, cyc)
            if worst_p is None or p > worst_p or (p == worst_p and cyc < worst):
                worst, worst_p = cyc, p

    witness, witness_p = None, None
    if diag:
        witness, witness_p = (diag[0],), float(gamma[diag[0], diag[0]])
    elif neg is not None:
        # traversal follows j -> i, the product reads i <- j, so reverse
        witness = _canonical(list(reversed(neg)))
        witness_p = cycle_product(gamma, witness)
        if worst is not None and worst_p >= witness_p:
            witness, witness_p = worst, worst_p
    return SmallGainReport(holds, not diag, witness, witness_p, worst, worst_p, g.ids)


@dataclass(frozen=True)
class ScalingVector:
    psi: np.ndarray
    slack: float

    def margins(self, g: GainMatrix) -> list:
        """``psi_i - gamma_ij psi_j`` for every off-diagonal nonzero."""
        return [(i, j, float(self.psi[i] - v * self.psi[j])) for i, j, v in g.edges()]

    def verify(self, g: GainMatrix) -> bool:
        return bool(np.all(self.psi > 0)) and all(m > 0 for _, _, m in self.margins(g))


def compute_scalings(g: GainMatrix, slack: float = 0.01) -> ScalingVector:
    """Positive ``psi`` with ``gamma_ij psi_j <= (1 - slack) psi_i`` on every edge.

    Potentials come from Bellman-Ford on arcs ``j -> i`` weighted
    ``-log(gamma_ij / (1 - slack))``; ``psi = exp(-dist)`` normalised to
    ``min psi = 1``.  The slack is reduced tenfold while the slackened system
    has a negative cycle.
    """
    report = check_small_gain(g)
    if not report.holds:
        raise SmallGainError(
            f"small-gain condition violated on cycle {report.label(report.witness)} "
            f"(product {report.witness_product:.6g})", report.witness, report.witness_product)
    n = g.n
    kappa = slack
    while True:
        arcs = [(j, i, -math.log(v / (1.0 - kappa))) for i, j, v in g.edges()]
        dist, neg = bellman_ford(n, arcs)
        if neg is None:
            break
        kappa /= 10.0
        if kappa < 1e-15:
            raise SmallGainError("no strictly feasible scaling found", None, None)
    psi = np.exp(-np.asarray(dist, dtype=float))
    psi = psi / psi.min() if n else psi
    out = ScalingVector(psi, kappa)
    if not out.verify(g):
        raise SmallGainError("computed scaling fails its own constraint check")
    return out


def compose_asf_value(values, psi) -> float:
    """``max_i S_i / psi_i``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if np.any(values < 0):
        raise StructureError("simulation-function values must be nonnegative")
    return float(np.max(values / np.asarray(psi, dtype=float)))


def compose_parameters(locals_: Sequence[LocalAsfParams], psi) -> ComposedAsf:
    """Conservative network-level parameters from max-form local ones."""
    psi = np.asarray(psi, dtype=float)
    return ComposedAsf(
        alpha=min(p.alpha / s for p, s in zip(locals_, psi)),
        sigma=max(p.sigma for p in locals_),
        rho_u=max(p.rho_u / s for p, s in zip(locals_, psi)),
        eps=max(p.eps / s for p, s in zip(locals_, psi)),
    )
