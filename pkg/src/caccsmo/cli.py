"""Command-line interface.

Subcommands: simulate, classify, design-check, estimate, sweep.  Every
failure path exits nonzero with a single greppable `ERROR:<CODE>:` line on
stderr (CONFIG=2, DESIGN=3, RUN=4, BOUNDS=5, IO=6).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .attacks import classify
from .config import ConfigError, RunConfig, parse_config
from .extended import check_pole_pair, check_rank_condition, enumerate_valid_designs, format_design_table
from .sim import AttackBoundError, SimConfig, run

EXIT_CONFIG, EXIT_DESIGN, EXIT_RUN, EXIT_BOUNDS, EXIT_IO = 2, 3, 4, 5, 6


def _fail(code: int, name: str, message: str):
    print(f"ERROR:{name}: {message}", file=sys.stderr)
    raise SystemExit(code)


def _load(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("noise", {})["seed"] = args.seed
        overrides.setdefault("sim", {})["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        overrides.setdefault("output", {})["out_dir"] = args.out_dir
    if getattr(args, "noiseless", False):
        overrides.setdefault("sim", {})["noiseless"] = True
    try:
        return parse_config(path=args.config, preset=args.preset, overrides=overrides)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "CONFIG", " | ".join(exc.errors))
    except OSError as exc:
        _fail(EXIT_IO, "IO", str(exc))


def _design_gate(cfg: RunConfig, strict: bool):
    """Check the configured split before any integration."""
    from .extended import SingularCompletionError, build_extended, build_partitioned

    try:
        ext = build_extended(cfg.platoon, cfg.part, cfg.a_fil)
        sys_ = build_partitioned(ext)
    except (SingularCompletionError, ValueError) as exc:
        _fail(EXIT_DESIGN, "DESIGN", str(exc))
    pe = check_pole_pair(sys_.A11, sys_.E1)
    pf = check_pole_pair(sys_.A11, sys_.F1)
    rank = check_rank_condition(sys_)
    ok = pe.passed(strict) and pf.passed(strict) and rank.passed
    if not ok:
        _fail(EXIT_DESIGN, "DESIGN",
              f"configured split rejected (polesE={pe.passed(strict)}, "
              f"polesF={pf.passed(strict)}, rank={rank.passed}, strict={strict})")
    return sys_


def cmd_simulate(args) -> int:
    cfg = _load(args)
    _design_gate(cfg, args.strict_poles)
    try:
        system = cfg.build_system()
    except ValueError as exc:
        _fail(EXIT_DESIGN, "DESIGN", str(exc))
    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        traj, metrics = run(system, cfg.scenario, cfg.sim, seed=cfg.sim.seed)
    except AttackBoundError as exc:
        _fail(EXIT_BOUNDS, "BOUNDS", str(exc))
    except RuntimeError as exc:
        _fail(EXIT_RUN, "RUN", str(exc))
    traj.to_csv(os.path.join(cfg.out_dir, "run.csv"))
    traj.events_csv(os.path.join(cfg.out_dir, "events.csv"))
    metrics.to_json(os.path.join(cfg.out_dir, "metrics.json"))
    if not args.no_plots:
        from .plots import render_run_figures

        render_run_figures(traj, system, cfg.out_dir)
    print(metrics.to_json())
    print(f"wrote run.csv, events.csv, metrics.json"
          f"{'' if args.no_plots else ' and figures'} to {cfg.out_dir}")
    return 0


def cmd_classify(args) -> int:
    cfg = _load(args)
    try:
        verdict = classify(cfg.scenario, cfg.part, cfg.platoon,
                           horizon=cfg.sim.horizon)
    except ValueError as exc:
        _fail(EXIT_DESIGN, "DESIGN", str(exc))
    print(verdict)
    return 0


def cmd_design_check(args) -> int:
    cfg = _load(args)
    reports = enumerate_valid_designs(cfg.platoon, a_fil=cfg.a_fil)
    print(format_design_table(reports, strict=args.strict_poles))
    admissible = sum(1 for r in reports if r.admissible(args.strict_poles))
    print(f"\n{admissible} of {len(reports)} candidate splits admissible "
          f"({'strict' if args.strict_poles else 'marginal-tolerant'} pole policy)")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "design_reports.jsonl")
        with open(path, "w") as fh:
            for r in reports:
                fh.write(json.dumps(r.record(args.strict_poles), sort_keys=True) + "\n")
        print(f"wrote {path}")
    mine = [r for r in reports
            if r.part.order == cfg.part.order and r.part.h == cfg.part.h]
    if not mine or not mine[0].admissible(args.strict_poles):
        _fail(EXIT_DESIGN, "DESIGN",
              f"configured split order={cfg.part.order} h={cfg.part.h} "
              "is not admissible under the chosen pole policy")
    return 0


def cmd_estimate(args) -> int:
    cfg = _load(args)
    try:
        system = cfg.build_system()
    except ValueError as exc:
        _fail(EXIT_DESIGN, "DESIGN", str(exc))
    if system.estimator is None:
        _fail(EXIT_DESIGN, "DESIGN", "estimator undefined for the configured split")
    try:
        with open(args.run_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
    except OSError as exc:
        _fail(EXIT_IO, "IO", str(exc))
    needed = ["t"] + [f"nufil{i}" for i in range(1, 5)]
    if not rows or any(k not in rows[0] for k in needed):
        _fail(EXIT_IO, "IO", f"run CSV lacks columns {needed}")
    t = np.array([float(r["t"]) for r in rows])
    nu_fil = np.array([[float(r[f"nufil{i}"]) for i in range(1, 5)] for r in rows])
    est = nu_fil @ system.estimator.G.T
    delta = system.estimator.delta
    out = args.out or os.path.join(os.path.dirname(args.run_csv) or ".", "estimates.csv")
    with open(out, "w", newline="\n") as fh:
        names = [f"dhat{i+1}" for i in range(est.shape[1])] + \
                [f"delta{i+1}" for i in range(est.shape[1])]
        fh.write(",".join(["t"] + names) + "\n")
        for k in range(len(t)):
            vals = [t[k], *est[k], *delta]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    print(f"wrote {out} ({len(t)} samples)")
    return 0


def _sweep_point(payload):
    """One sweep cell; runs in a worker process."""
    import numpy as np  # noqa: F401  (workers re-import on spawn)

    from .config import parse_config

    raw, attack_scale, eta_scale, seed = payload
    cfg = parse_config(overrides=raw)
    system = cfg.build_system()
    system.eta_bar = system.eta_bar * eta_scale
    # rebuild the detector bounds for the scaled uncertainty
    from .detection import healthy_error_bounds

    system.error_bounds = healthy_error_bounds(
        system.sys, system.eta_bar, system.zeta1_bar,
        e1_init=system.e1_init_offset, rho=system.obs.rho_vec,
        a22s=system.obs.a22s)
    scenario = cfg.scenario.scaled(attack_scale)
    try:
        traj, metrics = run(system, scenario, cfg.sim, seed=seed)
        failed = ""
    except AttackBoundError as exc:
        return {"attack_scale": attack_scale, "eta_scale": eta_scale, "seed": seed,
                "error": str(exc)}
    return {
        "attack_scale": attack_scale,
        "eta_scale": eta_scale,
        "seed": seed,
        "detected": bool(traj.detections),
        "first_detection": None if not traj.detections else traj.detections[0].time,
        "crashed": metrics.crashed,
        "crash_time": metrics.crash_time,
        "relvel_at_crash": metrics.relative_velocity_at_crash,
        "min_gap": metrics.min_distance,
        "max_threshold_margin": metrics.max_threshold_margin,
        "mean_threshold": float(np.mean(traj.threshold)),
        "error": failed,
    }


def cmd_sweep(args) -> int:
    cfg = _load(args)
    sweep = dict(cfg.sweep)
    attack_scales = [float(v) for v in (args.attack_scale or sweep.get("attack_scale") or [1.0])]
    eta_scales = [float(v) for v in (args.eta_scale or sweep.get("eta_scale") or [1.0])]
    seeds = [int(v) for v in (args.seeds or sweep.get("seeds") or [cfg.sim.seed])]
    grid = [(cfg.raw, a, e, s) for a in attack_scales for e in eta_scales for s in seeds]
    if not grid:
        print("empty sweep grid; nothing to do")
        return 0
    if args.jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, grid))
    else:
        results = [_sweep_point(g) for g in grid]
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = os.path.join(cfg.out_dir, "sweep.csv")
    fields = ["attack_scale", "eta_scale", "seed", "detected", "first_detection",
              "crashed", "crash_time", "relvel_at_crash", "min_gap",
              "max_threshold_margin", "mean_threshold", "error"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in results:
            writer.writerow({k: row.get(k, "") for k in fields})
    head = f"{'scale':>7} {'eta':>5} {'seed':>5} {'detected':>9} {'crashed':>8} {'min_gap':>9} {'margin':>9}"
    print(head)
    for r in results:
        if r.get("error"):
            print(f"{r['attack_scale']:>7.3g} {r['eta_scale']:>5.3g} {r['seed']:>5} "
                  f"-- aborted: {r['error']}")
            continue
        print(f"{r['attack_scale']:>7.3g} {r['eta_scale']:>5.3g} {r['seed']:>5} "
              f"{str(r['detected']):>9} {str(r['crashed']):>8} "
              f"{r['min_gap']:>9.3f} {r['max_threshold_margin']:>9.3f}")
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="caccsmo",
        description="Sliding-mode-observer attack detection toolkit for a "
                    "two-car CACC platoon",
    )
    parser.add_argument("--version", action="version", version=f"caccsmo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=True):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--preset", choices=["table1"],
                       help="named parameter preset (base for --config overrides)")
        p.add_argument("--seed", type=int, help="override the noise seed")
        p.add_argument("--noiseless", action="store_true", help="zero measurement noise")
        p.add_argument("--strict-poles", action="store_true",
                       help="reject marginal poles in the design gate")
        if out_dir:
            p.add_argument("--out-dir", help="override the output directory")

    p_sim = sub.add_parser("simulate", help="run one scenario, write CSV/metrics/figures")
    common(p_sim)
    p_sim.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p_sim.set_defaults(func=cmd_simulate)

    p_cls = sub.add_parser("classify", help="classify the configured attack scenario")
    common(p_cls, out_dir=False)
    p_cls.set_defaults(func=cmd_classify)

    p_dc = sub.add_parser("design-check", help="enumerate and gate all output splits")
    common(p_dc)
    p_dc.set_defaults(func=cmd_design_check)

    p_est = sub.add_parser("estimate", help="offline attack estimation from a run CSV")
    common(p_est, out_dir=False)
    p_est.add_argument("run_csv", help="CSV produced by the simulate subcommand")
    p_est.add_argument("--out", help="output CSV path (default: alongside the input)")
    p_est.set_defaults(func=cmd_estimate)

    p_sw = sub.add_parser("sweep", help="batch runs over attack/uncertainty scales")
    common(p_sw)
    p_sw.add_argument("--attack-scale", type=float, nargs="*",
                      help="attack amplitude multipliers")
    p_sw.add_argument("--eta-scale", type=float, nargs="*",
                      help="uncertainty bound multipliers")
    p_sw.add_argument("--seeds", type=int, nargs="*", help="noise seeds")
    p_sw.add_argument("--jobs", type=int, default=min(4, os.cpu_count() or 1),
                      help="parallel workers")
    p_sw.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
