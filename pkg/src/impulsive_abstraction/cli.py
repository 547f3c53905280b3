"""Command-line front end (``impabs``)."""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import pipeline as P
from .bench import DEFAULT_MEMORY_CAP, format_table, records_as_rows, run_benchmark
from .errors import NoAsfCaseError, SmallGainError, StructureError, UnsafeRegionError, ConstructionError
from .model import validate_network
from .modelfile import load_config, save_arena, save_controller, save_symbolic_model
from .runtime import gnuplot_script, run_closed_loop
from .synthesis import refine_controller

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 3
EXIT_DWELL = 4
EXIT_SMALL_GAIN = 5
EXIT_EMPTY_WINNING = 6


class Abort(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "eta", None) is not None:
        from .abstraction import AbstractionConfig
        cfg.abstraction = AbstractionConfig(args.eta, args.eta, cfg.abstraction.eta_u,
                                            cfg.abstraction.integrator_steps)
    rep = validate_network(cfg.network)
    if not rep.ok:
        raise Abort(EXIT_VALIDATION, str(rep))
    return cfg


def _certified(args, cfg):
    """Dwell check, certificates and scalings; aborts with the matching exit code."""
    dwell = P.dwell_reports(cfg.network)
    bad = [sid for sid, r in dwell.items() if not r.holds]
    if bad:
        raise Abort(EXIT_DWELL, f"dwell-time condition fails for subsystem(s) {bad}")
    bundles = P.certify(cfg.network, cfg.abstraction, cfg.psi_lemma, cfg.epsilon, cfg.delta)
    ga = P.analyse_gains(bundles, cfg.network, cfg.gain_form, cfg.slack)
    if ga.scalings is None:
        raise Abort(EXIT_SMALL_GAIN, str(ga.report))
    return bundles, ga


def _controller(args, cfg, bundles, ga, mode="compositional"):
    t0 = time.perf_counter()
    if mode == "monolithic":
        model = P.monolithic_model(cfg.network, cfg.abstraction)
    else:
        model = P.compositional_model(cfg.network, cfg.abstraction, cfg.composition)
    build = time.perf_counter() - t0
    ctrl = P.synthesize_model(model, cfg.network, bundles, ga.scalings.psi, cfg.shrink_safe_set, cfg.input_bound)
    if ctrl.empty:
        raise Abort(EXIT_EMPTY_WINNING, "winning set is empty")
    return model, ctrl, build


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args):
    cfg = load_config(args.config)
    rep = validate_network(cfg.network)
    _write_csv(_out(args, "validation.csv"), ["issue"], [[i] for i in rep.issues])
    print(f"{cfg.name}: {len(cfg.network.subsystems)} subsystems, {len(cfg.network.edges)} edges")
    print(rep)
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_check_dwell(args):
    cfg = _load(args)
    reports = P.dwell_reports(cfg.network)
    rows = []
    for sid, r in reports.items():
        print(f"subsystem {sid}: {r}")
        rows += [[sid, c, f"{v:.12g}", int(v < 0)] for c, v in r.values.items()]
    _write_csv(_out(args, "dwell.csv"), ["subsystem", "counter", "value", "negative"], rows)
    ok = all(r.holds for r in reports.values())
    print("dwell-time condition:", "holds for all subsystems" if ok else "FAILS")
    return EXIT_OK if ok else EXIT_DWELL


def cmd_check_gains(args):
    cfg = _load(args)
    bundles = P.certify(cfg.network, cfg.abstraction, cfg.psi_lemma, cfg.epsilon, cfg.delta)
    ga = P.analyse_gains(bundles, cfg.network, cfg.gain_form, cfg.slack)
    print(f"gain matrix ({ga.matrix.form} form):")
    print(ga.matrix.format())
    print(ga.report)
    ids = cfg.network.ids
    _write_csv(_out(args, "gains.csv"), ["row"] + [str(i) for i in ids],
               [[sid] + [f"{v:.12g}" for v in row] for sid, row in zip(ids, ga.matrix.gamma)])
    other = ga.max_form
    print(f"(for information, {'max' if ga.matrix.form == 'additive' else 'additive'} form: "
          f"{'holds' if other.holds else 'fails'}, worst cycle product {other.worst_product:.6g})")
    if ga.scalings is None:
        return EXIT_SMALL_GAIN
    psi = ga.scalings.psi
    print("psi =", " ".join(f"{v:.6g}" for v in psi))
    _write_csv(_out(args, "scalings.csv"), ["subsystem", "psi"], [[sid, f"{v:.12g}"] for sid, v in zip(ids, psi)])
    return EXIT_OK


def cmd_abstract(args):
    cfg = _load(args)
    if args.mode == "monolithic":
        mono = P.monolithic_model(cfg.network, cfg.abstraction)
        path = save_arena(mono.arena, _out(args, "monolithic.npz"))
        rows = [[k, v] for k, v in mono.report.items()]
        print(f"monolithic model: {mono.arena.n_states} states, built in {mono.build_seconds:.3f} s -> {path}")
        _write_csv(_out(args, "build_report.csv"), ["key", "value"], rows)
        return EXIT_OK
    composed = P.compositional_model(cfg.network, cfg.abstraction, cfg.composition)
    keys = [k for k in composed.models[0].report if k != "subsystem"]
    rows = []
    for m in composed.models:
        save_symbolic_model(m, _out(args, f"subsystem{m.subsystem.id}"))
        rows.append([m.subsystem.id] + [len(v) if isinstance(v, list) else v
                                         for v in (m.report[k] for k in keys)])
        print(f"subsystem {m.subsystem.id}: {m.report['states']} states, {m.report['transitions']} transitions, "
              f"{len(m.report['blocking_states'])} blocking, {m.report['seconds']:.4f} s")
    _write_csv(_out(args, "build_report.csv"), ["subsystem"] + keys, rows)
    return EXIT_OK


def cmd_compose(args):
    cfg = _load(args)
    composed = P.compositional_model(cfg.network, cfg.abstraction, cfg.composition)
    stats = composed.statistics()
    stats["arena_seconds"] = composed.arena_seconds
    save_arena(composed.arena(), _out(args, "composed.npz"))
    _write_csv(_out(args, "compose_report.csv"), ["key", "value"], list(stats.items()))
    for k, v in stats.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_synthesize(args):
    cfg = _load(args)
    bundles, ga = _certified(args, cfg)
    model, ctrl, build = _controller(args, cfg, bundles, ga, args.mode)
    path = save_controller(ctrl, _out(args, "controller.csv"))
    print(f"abstraction ({args.mode}): {build:.3f} s")
    print(f"winning states: {ctrl.size} of {len(ctrl.winning.reshape(-1))}, {ctrl.iterations} iteration(s), "
          f"{ctrl.seconds:.3f} s -> {path}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load(args)
    bundles, ga = _certified(args, cfg)
    composed, ctrl, _ = _controller(args, cfg, bundles, ga)
    policy = refine_controller(ctrl)
    ids = cfg.network.ids
    starts = [dict(s) for s in cfg.initial_states]
    if args.random:
        rng = np.random.default_rng(args.seed)
        for pts in P.winning_initial_points(composed, ctrl, rng, args.random):
            starts.append({sid: p for sid, p in zip(ids, pts)})
    safe = {s.id: s.safe for s in cfg.network.subsystems}
    rows, ok = [], True
    for k, x0 in enumerate(starts):
        tr = run_closed_loop(cfg.network, policy, x0, cfg.horizon, substeps=cfg.substeps)
        path = _out(args, f"trajectory{k}.csv")
        tr.to_csv(path, cfg.network)
        inside = tr.halted is None and tr.stays_in(safe, cfg.network)
        ok &= inside
        rows.append([k] + [f"{float(np.ravel(x0[sid])[0]):.6g}" for sid in ids] + [int(inside), tr.halted or ""]
                    + [f"{v:.6g}" for v in tr.phi_observed])
        print(f"run {k}: {'inside safe set' if inside else 'LEFT safe set'}"
              + (f" ({tr.halted})" if tr.halted else "")
              + "; observed phi " + " ".join(f"{v:.3g}" for v in tr.phi_observed))
    _write_csv(_out(args, "simulation.csv"), ["run"] + [f"x0_{i}" for i in ids] + ["inside", "halted"]
               + [f"phi_{i}" for i in ids], rows)
    if starts:
        lo = min(float(b.lower.min()) for b in safe.values())
        hi = max(float(b.upper.max()) for b in safe.values())
        with open(_out(args, "trajectory0.gp"), "w") as fh:
            fh.write(gnuplot_script("trajectory0.csv", ids, (lo, hi), cfg.horizon))
    return EXIT_OK if ok else EXIT_ERROR


def cmd_monitor(args):
    cfg = _load(args)
    bundles, ga = _certified(args, cfg)
    composed, ctrl, _ = _controller(args, cfg, bundles, ga)
    if args.zero_eps_bar:
        bundles = [b.with_eps_bar(0.0) for b in bundles]
    runs = args.runs or cfg.monitor_runs
    steps = args.steps or cfg.monitor_steps
    reports, _ = P.monte_carlo_monitor(composed, ctrl, bundles, ga.scalings.psi, runs, steps, args.seed,
                                       cfg.substeps, args.threads)
    names = ["lsf1", "lsmf2", "sf1", "sf2"]
    rows = [[k] + [r.violations[n] for n in names] + [f"{r.max_violation:.6g}", int(r.passed)]
            for k, r in enumerate(reports)]
    _write_csv(_out(args, "monitor.csv"), ["run"] + names + ["max_violation", "passed"], rows)
    if reports:
        reports[0].to_csv(_out(args, "monitor_run0.csv"), cfg.network.ids)
    total = {n: sum(r.violations[n] for r in reports) for n in names}
    passed = all(r.passed for r in reports)
    print(f"{len(reports)} paired runs of {steps} steps (seed {args.seed})")
    print("violations: " + ", ".join(f"{n} {v}" for n, v in total.items()))
    print("relation monitor:", "pass" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_ERROR


def cmd_bench(args):
    records, ratios = run_benchmark(range(args.n_min, args.n_max + 1), args.eta if args.eta else 2.5,
                                    memory_cap=int(args.memory_cap * 1024 ** 3))
    rows = records_as_rows(records)
    _write_csv(_out(args, "bench.csv"), list(rows[0]), [list(r.values()) for r in rows])
    print(format_table(records, ratios))
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="warehouses3",
                        help="model file, or the name of a built-in model (default: warehouses3)")
    common.add_argument("--out", default="impabs-out", help="output directory (default: impabs-out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo runs")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--eta", type=float, default=None, help="override the state and internal-input pitch")

    parser = argparse.ArgumentParser(prog="impabs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check model structure").set_defaults(fn=cmd_validate)
    sub.add_parser("check-dwell", parents=[common], help="dwell-time condition").set_defaults(fn=cmd_check_dwell)
    sub.add_parser("check-gains", parents=[common], help="gain matrix, small-gain verdict, scalings") \
        .set_defaults(fn=cmd_check_gains)
    p = sub.add_parser("abstract", parents=[common], help="build and save symbolic models")
    p.add_argument("--mode", choices=["compositional", "monolithic"], default="compositional")
    p.set_defaults(fn=cmd_abstract)
    sub.add_parser("compose", parents=[common], help="compose subsystem models and report statistics") \
        .set_defaults(fn=cmd_compose)
    p = sub.add_parser("synthesize", parents=[common], help="safety controller")
    p.add_argument("--mode", choices=["compositional", "monolithic"], default="compositional")
    p.set_defaults(fn=cmd_synthesize)
    p = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    p.add_argument("--random", type=int, default=0, help="additional random winning initial states")
    p.set_defaults(fn=cmd_simulate)
    p = sub.add_parser("monitor", parents=[common], help="Monte-Carlo relation monitoring")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--zero-eps-bar", action="store_true", help="negative control: force the offset to zero")
    p.set_defaults(fn=cmd_monitor)
    p = sub.add_parser("bench", parents=[common], help="monolithic versus compositional build time")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--memory-cap", type=float, default=DEFAULT_MEMORY_CAP / 1024 ** 3, help="GiB")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Abort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (StructureError, NoAsfCaseError, ConstructionError, SmallGainError, UnsafeRegionError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, SmallGainError):
            return EXIT_SMALL_GAIN
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
