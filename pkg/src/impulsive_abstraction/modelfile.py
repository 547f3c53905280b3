"""Model files (YAML) and serialization of symbolic models and controllers.

Model file layout::

    name: <label>
    defaults: {<any subsystem key>: <value>}     # optional, merged into each subsystem
    subsystems:
      - id: 1
        flow: {A: [[..]], B: [[..]], D: [[..]], bias: [..]}
        jump: {A: .., B: .., D: .., bias: ..}
        state_box: [[lo, hi], ...]
        internal_input_box: [[lo, hi], ...]      # in-neighbour blocks, ascending id
        external_inputs: [[u], ...]  |  {box: [[lo, hi], ...]}
        timing: {tau: .., z_min: .., z_max: .., instants: [..]}
        outputs: {<target id>: [[C]]}            # own id = external output
        safe_box: [[lo, hi], ...]                # optional
        certificate: {alpha_lower: .., ...}      # optional, required when n > 1
    edges: [[src, dst], ...]
    internal_variation_bound: {<id>: phi}        # optional
    abstraction: {eta_x, eta_w, eta_u, integrator_steps}
    asf: {psi_lemma, epsilon, delta, gain_form, slack}
    composition: {phi: [[src, dst, value], ...]}
    safety: {shrink_safe_set, input_bound}
    simulation: {horizon, substeps, initial_states: [{id: x}, ...]}
    monitor: {runs, steps}
"""
from __future__ import annotations

import copy
import csv
import io as _io
import os
import zipfile
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .abstraction import AbstractionConfig
from .composition import CompositionConfig
from .errors import StructureError
from .model import AffineDynamics, Box, ImpulsiveSubsystem, JumpTiming, NetworkModel


@dataclass
class RunConfig:
    name: str
    network: NetworkModel
    abstraction: AbstractionConfig
    composition: CompositionConfig = field(default_factory=CompositionConfig)
    psi_lemma: float = 0.99
    epsilon: float = 0.5
    delta: Optional[float] = None
    gain_form: str = "additive"
    slack: float = 0.01
    shrink_safe_set: bool = False
    input_bound: float = 1.0
    horizon: float = 10.0
    substeps: int = 32
    initial_states: list = field(default_factory=list)
    monitor_runs: int = 100
    monitor_steps: int = 50


def builtin_models() -> list:
    return sorted(p.name[:-5] for p in resources.files(__package__).joinpath("data").iterdir()
                  if p.name.endswith(".yaml"))


def _read_text(source: str) -> str:
    if os.path.exists(source):
        with open(source) as fh:
            return fh.read()
    name = os.path.basename(source)
    if name.endswith(".yaml"):
        name = name[:-5]
    res = resources.files(__package__).joinpath("data").joinpath(f"{name}.yaml")
    if res.is_file():
        return res.read_text()
    raise FileNotFoundError(f"no model file {source!r} (built-in models: {', '.join(builtin_models())})")


def _dyn(d: dict, n: int, q: int, m: int) -> AffineDynamics:
    A = np.asarray(d.get("A", np.zeros((n, n))), dtype=float)
    B = np.asarray(d.get("B", np.zeros((n, q))), dtype=float).reshape(n, q) if q else np.zeros((n, 0))
    D = np.asarray(d.get("D", np.zeros((n, m))), dtype=float)
    return AffineDynamics(A, B, D, d.get("bias"))


def _subsystem(raw: dict, defaults: dict) -> ImpulsiveSubsystem:
    entry = copy.deepcopy(defaults)
    entry.update(raw)
    try:
        sid = int(entry["id"])
        state_box = Box.from_intervals(entry["state_box"])
        n = state_box.dim
        w_box = Box.from_intervals(entry.get("internal_input_box") or [])
        ext = entry["external_inputs"]
        if isinstance(ext, dict):
            ext = Box.from_intervals(ext["box"])
            m = ext.dim
        else:
            m = len(ext[0])
        timing = JumpTiming(**entry["timing"])
        flow = _dyn(entry["flow"], n, w_box.dim, m)
        jump = _dyn(entry["jump"], n, w_box.dim, m)
    except KeyError as exc:
        raise StructureError(f"subsystem entry is missing {exc}") from None
    safe = Box.from_intervals(entry["safe_box"]) if entry.get("safe_box") is not None else None
    outputs = {int(k): v for k, v in (entry.get("outputs") or {}).items()}
    return ImpulsiveSubsystem(sid, flow, jump, state_box, w_box, ext, timing, outputs, safe,
                              entry.get("certificate"))


def parse_config(data: dict) -> RunConfig:
    defaults = data.get("defaults") or {}
    subs = tuple(_subsystem(raw, defaults) for raw in data.get("subsystems") or [])
    edges = frozenset((int(a), int(b)) for a, b in data.get("edges") or [])
    phi = {int(k): float(v) for k, v in (data.get("internal_variation_bound") or {}).items()}
    network = NetworkModel(subs, edges, phi)
    ab = data.get("abstraction") or {}
    abstraction = AbstractionConfig(float(ab.get("eta_x", 0.6667)), ab.get("eta_w"),
                                    float(ab.get("eta_u", 0.0)), int(ab.get("integrator_steps", 0)))
    comp = data.get("composition") or {}
    comp_phi = {(int(a), int(b)): float(v) for a, b, v in comp.get("phi") or []}
    asf = data.get("asf") or {}
    safety = data.get("safety") or {}
    sim = data.get("simulation") or {}
    mon = data.get("monitor") or {}
    inits = [{int(k): v for k, v in row.items()} for row in sim.get("initial_states") or []]
    return RunConfig(
        name=str(data.get("name", "model")), network=network, abstraction=abstraction,
        composition=CompositionConfig(comp_phi),
        psi_lemma=float(asf.get("psi_lemma", 0.99)), epsilon=float(asf.get("epsilon", 0.5)),
        delta=asf.get("delta"), gain_form=str(asf.get("gain_form", "additive")),
        slack=float(asf.get("slack", 0.01)),
        shrink_safe_set=bool(safety.get("shrink_safe_set", False)),
        input_bound=float(safety.get("input_bound", 1.0)),
        horizon=float(sim.get("horizon", 10.0)), substeps=int(sim.get("substeps", 32)),
        initial_states=inits, monitor_runs=int(mon.get("runs", 100)), monitor_steps=int(mon.get("steps", 50)))


def load_config(source: str) -> RunConfig:
    """Read a model file by path, or a built-in model by name (e.g. ``warehouses3``)."""
    data = yaml.safe_load(_read_text(source))
    if not isinstance(data, dict):
        raise StructureError("model file must contain a mapping at top level")
    return parse_config(data)


# -- serialization -------------------------------------------------------------

def _write_npz(path: str, **arrays) -> None:
    """``.npz`` with fixed member timestamps so identical data gives identical bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = _io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def save_symbolic_model(model, prefix: str) -> list:
    """``prefix.csv`` (src,w,u,kind,dst with kind 0=flow 1=jump) and ``prefix.npz`` (boxes)."""
    table = model.transition_table()
    csv_path, npz_path = prefix + ".csv", prefix + ".npz"
    with open(csv_path, "w", newline="") as fh:
        fh.write("src,w,u,kind,dst\n")
        np.savetxt(fh, table, fmt="%d", delimiter=",")
    _write_npz(npz_path, lo=model.lo, hi=model.hi, grid=model.qx.points(), internal=model.qw.points(),
               inputs=model.inputs, counters=np.array([model.timing.z_min, model.timing.z_max]))
    return [csv_path, npz_path]


def save_arena(arena, path: str) -> str:
    _write_npz(path, lo=arena.lo, hi=arena.hi, blocked=arena.blocked, events=arena.events,
               grid_shape=np.array(arena.grid_shape), z_min=np.array(arena.z_min), z_max=np.array(arena.z_max),
               inputs=np.array(arena.input_labels))
    return path


def save_controller(ctrl, path: str) -> str:
    """CSV ``state,inputs``: composed state index and space-separated admissible input indices."""
    idx, rows = ctrl.table()
    masks = np.packbits(rows, axis=1, bitorder="little")
    keys = [bytes(r) for r in masks]
    cache = {}
    with open(path, "w") as fh:
        fh.write("state,inputs\n")
        lines = []
        for s, r, key in zip(idx.tolist(), rows, keys):
            text = cache.get(key)
            if text is None:
                text = cache[key] = " ".join(str(u) for u in np.nonzero(r)[0])
            lines.append(f"{s},{text}\n")
        fh.writelines(lines)
    return path


def load_controller_table(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            out[int(row["state"])] = [int(v) for v in row["inputs"].split()] if row["inputs"] else []
    return out
