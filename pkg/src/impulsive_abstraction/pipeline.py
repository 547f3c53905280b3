"""End-to-end steps shared by the command line and the acceptance tests."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .abstraction import AbstractionConfig, build_monolithic, build_symbolic_subsystem
from .certificates import (CertificateBundle, CertificateParams, check_dwell_time, derive_affine_certificate,
                           derive_local_asf, precision_bound, select_asf_case)
from .composition import ComposedModel, CompositionConfig, compose
from .gains import build_gain_matrix, check_small_gain, compose_parameters, compute_scalings
from .model import NetworkModel
from .runtime import monitor_relation, paired_run
from .synthesis import SafeSet, synthesize


def certificate_params(network: NetworkModel, sid: int) -> CertificateParams:
    sub = network.by_id(sid)
    phi = network.variation_bound(sid)
    if sub.certificate is not None:
        return CertificateParams.from_mapping(sub.certificate, phi)
    return derive_affine_certificate(sub, phi)


def dwell_reports(network: NetworkModel) -> dict:
    return {s.id: check_dwell_time(certificate_params(network, s.id), s.timing) for s in network.subsystems}


def certify(network: NetworkModel, abstraction: AbstractionConfig, psi_lemma: float = 0.99,
            epsilon: float = 0.5, delta: Optional[float] = None) -> list:
    """One :class:`CertificateBundle` per subsystem (raises if no construction applies)."""
    out = []
    for s in network.subsystems:
        params = certificate_params(network, s.id)
        dwell = check_dwell_time(params, s.timing)
        case = select_asf_case(params, s.timing, epsilon, delta)
        eta_u = abstraction.eta_u if hasattr(s.external_inputs, "dim") else 0.0
        local = derive_local_asf(params, case, s.timing, abstraction.eta_x, abstraction.eta_w, eta_u, psi_lemma)
        out.append(CertificateBundle(s.id, params, dwell, case, local, s.timing))
    return out


@dataclass
class GainAnalysis:
    matrix: object
    report: object
    scalings: Optional[object]
    max_form: object


def analyse_gains(bundles: Sequence[CertificateBundle], network: NetworkModel, form: str = "additive",
                  slack: float = 0.01) -> GainAnalysis:
    locals_ = [b.local for b in bundles]
    g = build_gain_matrix(locals_, network.edges, network.ids, form)
    rep = check_small_gain(g)
    psi = compute_scalings(g, slack) if rep.holds else None
    other = "max" if form == "additive" else "additive"
    return GainAnalysis(g, rep, psi, check_small_gain(build_gain_matrix(locals_, network.edges, network.ids, other)))


def compositional_model(network: NetworkModel, abstraction: AbstractionConfig,
                        composition: Optional[CompositionConfig] = None) -> ComposedModel:
    models = [build_symbolic_subsystem(s, abstraction) for s in network.subsystems]
    return compose(models, network, composition)


def safe_set(network: NetworkModel, shrink_by: float = 0.0) -> SafeSet:
    safe = SafeSet({s.id: s.safe for s in network.subsystems})
    return safe.shrink(shrink_by) if shrink_by > 0 else safe


def synthesize_model(model, network: NetworkModel, bundles=None, psi=None, shrink: bool = False,
                     input_bound: float = 1.0):
    margin = 0.0
    if shrink:
        margin = precision_bound(compose_parameters([b.local for b in bundles], psi), input_bound).eps_hat
    return synthesize(model, safe_set(network, margin))


def monolithic_model(network: NetworkModel, abstraction: AbstractionConfig):
    return build_monolithic(network, abstraction)


def winning_initial_points(composed: ComposedModel, ctrl, rng: np.random.Generator, count: int) -> list:
    """Random lattice points whose all-zero-counter state is winning, as per-component point lists."""
    arena = composed.arena()
    candidates = np.nonzero(ctrl.winning[(0,) * arena.n_components])[0]
    if not len(candidates):
        return []
    picks = rng.choice(candidates, size=count, replace=len(candidates) < count)
    out = []
    for g in picks:
        axis_idx = np.unravel_index(int(g), arena.grid_shape)
        pts, d = [], 0
        for m in composed.models:
            n = m.subsystem.state_dim
            k = np.asarray(axis_idx[d:d + n], dtype=np.int64)
            pts.append((k + m.qx.k_lo) * m.qx.eta)
            d += n
        out.append(pts)
    return out


def monte_carlo_monitor(composed: ComposedModel, ctrl, bundles, psi, runs: int, steps: int, seed: int = 0,
                        substeps: int = 32, threads: int = 1, tolerance: float = 1e-9):
    """``runs`` paired runs from random winning lattice points; returns (reports, paired runs)."""
    root = np.random.SeedSequence(seed)
    starts = winning_initial_points(composed, ctrl, np.random.default_rng(root.spawn(1)[0]), runs)
    seeds = root.spawn(runs + 1)[1:]

    def one(k):
        rng = np.random.default_rng(seeds[k])
        pr = paired_run(composed, starts[k], steps, rng, ctrl, substeps)
        rep = monitor_relation(pr.concrete, pr.abstract, bundles, psi, composed.network, tolerance=tolerance)
        return rep, pr

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(len(starts))))
    else:
        results = [one(k) for k in range(len(starts))]
    return [r for r, _ in results], [p for _, p in results]
