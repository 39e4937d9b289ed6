"""Command-line entry points: preprocess, simulate, locate, eval.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import formats
from .config import engine_config, load_config
from .engine import ALGORITHMS, Session, replay
from .errors import ConfigError, FpbpError, LengthMismatch

EXIT_CONFIG = 2
EXIT_DATA = 3


def _maps(paths: Sequence[str]) -> dict:
    if not paths:
        raise ConfigError("at least one --map is required")
    maps = {}
    for p in paths:
        fmap = formats.load_map(p)
        if fmap.floor_id in maps:
            raise ConfigError(f"two maps for floor {fmap.floor_id}")
        maps[fmap.floor_id] = fmap
    return maps


def cmd_preprocess(args) -> int:
    if args.map is None or len(args.map) != 1:
        raise ConfigError("preprocess takes exactly one --map manifest")
    palette = formats.load_palette(args.palette) if args.palette else None
    fmap = formats.compile_manifest(args.map[0], raster=args.raster, palette=palette)
    out = Path(args.out or Path(args.map[0]).with_suffix(".map.json"))
    formats.save_map(fmap, out)
    print(f"wrote {out}: floor {fmap.floor_id}, {fmap.width_px}x{fmap.height_H_I} px, "
          f"{fmap.n_rooms} rooms, {len(fmap.door_rooms)} doors, {len(fmap.grid.points)} grid points")
    return 0


def cmd_simulate(args) -> int:
    scenario = formats.load_scenario(args.scenario, seed=args.seed)
    from .sim import simulate

    events, truth = simulate(scenario)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    n = formats.write_jsonl(out / "events.jsonl", formats.EVENTS_SCHEMA, events)
    formats.write_jsonl(out / "truth.jsonl", formats.TRUTH_SCHEMA, formats.truth_records(truth))
    formats.write_json(out / "beacons.json", formats.beacons_to_dict(scenario.registry))
    for floor, fmap in sorted(scenario.maps.items()):
        formats.save_map(fmap, out / f"floor{floor}.map.json")
    sx, sy = truth.start
    print(f"wrote {n} events and {len(truth.steps)} truth steps to {out} "
          f"(seed {scenario.seed}, start {sx:.2f} {sy:.2f})")
    return 0


def cmd_locate(args) -> int:
    cfg = load_config(args.config)
    ecfg = engine_config(cfg, algorithm=args.algo, seed=args.seed)
    maps = _maps(args.map)
    if args.beacons is None or args.log is None:
        raise ConfigError("locate needs --beacons and --log")
    registry = formats.load_beacons(args.beacons)
    events = formats.read_jsonl(args.log, formats.EVENTS_SCHEMA)
    trace_records: list[dict] = []
    session = Session(maps, registry, ecfg, initial_floor=args.floor, init_position=args.init,
                      trace=trace_records.append if args.debug_trace else None)
    outputs = replay(session, events)
    records = []
    for o in outputs:
        rec = o.record()
        rec["mode"] = ecfg.algorithm
        records.append(rec)
    out = Path(args.out or "outputs.jsonl")
    formats.write_jsonl(out, formats.OUTPUTS_SCHEMA, records)
    if args.debug_trace:
        formats.write_jsonl(args.debug_trace, formats.TRACE_SCHEMA, trace_records)
    print(f"{ecfg.algorithm}: {len(records)} outputs -> {out}; "
          f"{len(session.floor_switches)} floor switches, {session.reinit_count} re-initializations")
    return 0


def cmd_eval(args) -> int:
    from .sim import evaluate

    outputs = formats.read_jsonl(args.log, formats.OUTPUTS_SCHEMA)
    truth = [r for r in formats.read_jsonl(args.truth, formats.TRUTH_SCHEMA)]
    if len(outputs) != len(truth):
        raise LengthMismatch(f"{len(outputs)} outputs vs {len(truth)} truth steps")
    est = np.array([[r["x"], r["y"]] for r in outputs], dtype=float).reshape(-1, 2)
    tru = np.array([[r["x"], r["y"]] for r in truth], dtype=float).reshape(-1, 2)
    floors = np.array([r.get("floor", 0) for r in outputs], dtype=int)
    exclude = np.array([bool(r.get("reset", False)) for r in outputs])
    maps = _maps(args.map) if args.map else None
    report = evaluate(est, tru, floors, maps, exclude)
    algo = outputs[0].get("mode", "?") if outputs else "?"
    print(f"{'algo':<14}{'MPE':>8}{'P50':>8}{'P80':>8}{'STD':>8}{'N':>7}{'walls':>7}")
    print(f"{algo:<14}{report.mpe:8.3f}{report.p50:8.3f}{report.p80:8.3f}{report.std:8.3f}"
          f"{len(report.errors):7d}{report.wall_crossing_count:7d}")
    if args.per_step:
        print("step,error")
        for i, e in enumerate(report.errors):
            print(f"{i},{e:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        metrics = {"schema": formats.METRICS_SCHEMA, "algorithm": algo, **report.as_dict(per_step=args.per_step)}
        formats.write_json(out / "metrics.json", metrics)
        with (out / "cdf.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["error", "cumulative_fraction"])
            for e, f in report.cdf():
                w.writerow([f"{e:.6f}", f"{f:.6f}"])
        if args.per_step:
            with (out / "errors.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "error"])
                for i, e in enumerate(report.errors):
                    w.writerow([i, f"{e:.6f}"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpbp", description="Floor-plan-assisted BLE + PDR indoor positioning.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, maps=True):
        if maps:
            sp.add_argument("--map", action="append", help="map artifact or manifest (repeat per floor)")
        sp.add_argument("--out", help="output file or directory")
        return sp

    sp = common(sub.add_parser("preprocess", help="compile a stylized raster into a map artifact"))
    sp.add_argument("--raster", help="PNG raster (defaults to the manifest's)")
    sp.add_argument("--palette", help="palette JSON (class -> #rrggbb)")
    sp.set_defaults(func=cmd_preprocess)

    sp = common(sub.add_parser("simulate", help="synthesize an event log and truth from a scenario"), maps=False)
    sp.add_argument("scenario", help="scenario JSON")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("locate", help="replay an event log through an estimator"))
    sp.add_argument("--beacons", help="beacon registry (JSON or CSV)")
    sp.add_argument("--log", help="event log JSONL")
    sp.add_argument("--algo", choices=ALGORITHMS)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="JSON config overriding the packaged defaults")
    sp.add_argument("--floor", type=int, help="initial floor (default: lowest)")
    sp.add_argument("--init", type=float, nargs=2, metavar=("X", "Y"), help="known start position")
    sp.add_argument("--debug-trace", help="write the correction trace JSONL here")
    sp.set_defaults(func=cmd_locate)

    sp = common(sub.add_parser("eval", help="score outputs against truth"))
    sp.add_argument("--log", required=True, help="outputs JSONL")
    sp.add_argument("--truth", required=True, help="truth JSONL")
    sp.add_argument("--per-step", action="store_true", help="emit the error-vs-step series")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FpbpError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
