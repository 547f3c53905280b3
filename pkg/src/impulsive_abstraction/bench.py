"""Monolithic versus compositional abstraction cost on rings of growing size.

Rings longer than three reuse the three warehouse parameter sets cyclically.
Times are the minimum over repeated builds, which is the least noisy
estimate of the work itself.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional

from .abstraction import AbstractionConfig, build_monolithic, build_symbolic_subsystem, estimate_monolithic_bytes
from .composition import compose
from .model import NetworkModel, warehouses

DEFAULT_MEMORY_CAP = 2 * 1024 ** 3


@dataclass
class BenchmarkRecord:
    N: int
    mode: str
    eta_x: float
    seconds: Optional[float]
    states: int
    transitions: Optional[int]
    capped: bool = False


def _min_time(fn: Callable, min_repeats: int, budget: float, max_repeats: int = 200):
    best, result = float("inf"), None
    spent, k = 0.0, 0
    while k < min_repeats or (spent < budget and k < max_repeats):
        t0 = time.perf_counter()
        result = fn()
        dt = time.perf_counter() - t0
        best = min(best, dt)
        spent += dt
        k += 1
    return best, result


def compositional_build(network: NetworkModel, config: AbstractionConfig):
    models = [build_symbolic_subsystem(s, config) for s in network.subsystems]
    return compose(models, network)


def run_benchmark(n_range: Iterable[int] = range(1, 6), eta_x: float = 2.5, base: Callable = warehouses,
                  memory_cap: int = DEFAULT_MEMORY_CAP, min_repeats: int = 3, budget: float = 0.3):
    """Records for both modes at every N, plus ``{N: monolithic / compositional}``."""
    config = AbstractionConfig(eta_x)
    records, ratios = [], {}
    for n in n_range:
        net = base(n)
        t_c, comp = _min_time(lambda: compositional_build(net, config), min_repeats, budget)
        records.append(BenchmarkRecord(n, "compositional", eta_x, t_c, sum(m.n_states for m in comp.models),
                                       sum(m.transition_count() for m in comp.models)))
        need = estimate_monolithic_bytes(net, config)
        mono_states = 1
        for s in net.subsystems:
            mono_states *= s.timing.z_max + 1
        if need > memory_cap:
            grid = 1
            for m in comp.models:
                grid *= m.n_grid
            records.append(BenchmarkRecord(n, "monolithic", eta_x, None, grid * mono_states, None, capped=True))
            ratios[n] = None
            continue
        t_m, mono = _min_time(lambda: build_monolithic(net, config), min_repeats, budget)
        records.append(BenchmarkRecord(n, "monolithic", eta_x, t_m, mono.n_states, mono.transition_count()))
        ratios[n] = t_m / t_c if t_c > 0 else float("inf")
    return records, ratios


def format_table(records, ratios) -> str:
    lines = ["# rings built by cycling the three warehouse parameter sets",
             f"{'N':>3} {'compositional [s]':>18} {'monolithic [s]':>15} {'ratio':>8} "
             f"{'comp. states':>13} {'mono. states':>16}"]
    by = {(r.N, r.mode): r for r in records}
    for n in sorted({r.N for r in records}):
        c, m = by[(n, "compositional")], by[(n, "monolithic")]
        mono_t = "capped" if m.capped else f"{m.seconds:.6f}"
        ratio = "-" if ratios[n] is None else f"{ratios[n]:.2f}"
        lines.append(f"{n:>3} {c.seconds:>18.6f} {mono_t:>15} {ratio:>8} {c.states:>13} {m.states:>16}")
    return "\n".join(lines)


def records_as_rows(records) -> list:
    return [asdict(r) for r in records]
