"""Command-line driver: world generation, surveys, map building, evaluation and degradation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from fuseloc.evaluation import (
    build_map,
    degradation_experiment,
    evaluate,
    export_results,
    failure_fraction,
    load_map,
    load_survey,
    save_survey,
)
from fuseloc.fusion import FusionConfig
from fuseloc.registration import DEFAULT_VERIFY_TOP, IcpParams
from fuseloc.simworld import World, preset_worlds

EXIT_OK = 0
EXIT_UNAVAILABLE = 2
FAILURE_LIMIT = 0.5

log = logging.getLogger("fuseloc")


def _pick(cls, raw: dict | None):
    if not raw:
        return cls()
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise SystemExit(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**raw)


def load_config(path: str | None) -> dict:
    """JSON with optional sections "fusion", "icp" and "evaluation"."""
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _settings(args) -> tuple[FusionConfig, IcpParams | None, dict]:
    cfg = load_config(args.config)
    fusion = _pick(FusionConfig, cfg.get("fusion"))
    ev = {"top_n": 10, "verify_top": DEFAULT_VERIFY_TOP, "register": True, "error_over": "all",
          **cfg.get("evaluation", {})}
    icp = _pick(IcpParams, cfg.get("icp")) if ev["register"] and not getattr(args, "no_icp", False) else None
    return fusion, icp, ev


def cmd_world_gen(args) -> int:
    worlds = preset_worlds(args.seed)
    if args.preset not in worlds:
        raise SystemExit(f"unknown preset {args.preset!r}; choose from {sorted(worlds)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    worlds[args.preset].save(out)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_survey(args) -> int:
    world = World.load(args.world)
    seed = 0 if args.seed is None else args.seed
    samples = world.queries(seed) if args.queries else world.survey(seed)
    save_survey(args.out, samples)
    log.info("wrote %d samples to %s", len(samples), args.out)
    return EXIT_OK


def cmd_build_map(args) -> int:
    world = World.load(args.world)
    samples = load_survey(args.survey)
    build_map(samples, args.out, world.lidar.projection, args.n)
    log.info("map with %d entries written to %s", len(samples), args.out)
    return EXIT_OK


def _exit_code(records) -> int:
    frac = failure_fraction(records)
    if frac > FAILURE_LIMIT:
        log.error("%.0f%% of queries could not be localized", 100 * frac)
        return EXIT_UNAVAILABLE
    return EXIT_OK


def _print_summary(summary) -> None:
    for name, m in summary.methods.items():
        print(f"{name:6s} recall@1={m.recall[0]:.3f} recall@{summary.top_n}={m.recall[-1]:.3f} "
              f"mean={m.mean_error:.2f} m std={m.std_error:.2f} m failed={m.n_failed}")
    print("modes:", json.dumps(summary.mode_counts, sort_keys=True))


def cmd_evaluate(args) -> int:
    fusion, icp, ev = _settings(args)
    db = load_map(args.map)
    queries = load_survey(args.queries)
    records, summary = evaluate(queries, db, fusion, icp, None, ev["top_n"], ev["verify_top"], ev["error_over"])
    export_results(records, summary, args.out)
    _print_summary(summary)
    return _exit_code(records)


def cmd_degrade(args) -> int:
    fusion, _, ev = _settings(args)
    db = load_map(args.map)
    queries = load_survey(args.queries)
    seed = 0 if args.seed is None else args.seed
    result, records = degradation_experiment(queries, db, fusion, args.fraction, args.variance, seed)
    export_results(records, result.degraded, args.out, {"degradation": result.to_dict()})
    for name in ("lidar", "wifi", "fused"):
        print(f"{name:6s} recall@1 {result.clean.recall_at(name):.3f} -> {result.degraded.recall_at(name):.3f} "
              f"(drop {result.recall_drop(name):+.3f})")
    return _exit_code(records)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuseloc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help: str):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="JSON file with fusion/icp/evaluation overrides")
        sp.add_argument("--out", required=True, help=out_help)

    world = sub.add_parser("world", help="world files")
    wsub = world.add_subparsers(dest="world_command", required=True)
    gen = wsub.add_parser("gen", help="write a preset world as JSON")
    gen.add_argument("--preset", default="ltu_corridor")
    common(gen, "output JSON path")
    gen.set_defaults(func=cmd_world_gen)

    sv = sub.add_parser("survey", help="simulate a survey (or query) traversal")
    sv.add_argument("--world", required=True)
    sv.add_argument("--queries", action="store_true", help="laterally offset query traversal")
    common(sv, "output survey directory")
    sv.set_defaults(func=cmd_survey)

    bm = sub.add_parser("build-map", help="build the map database from a survey")
    bm.add_argument("--world", required=True, help="world JSON (for the LiDAR projection)")
    bm.add_argument("--survey", required=True)
    bm.add_argument("--n", type=int, default=32, help="fixed Wi-Fi scan size")
    common(bm, "output map directory")
    bm.set_defaults(func=cmd_build_map)

    ev = sub.add_parser("evaluate", help="localize every query and export metrics")
    ev.add_argument("--map", required=True)
    ev.add_argument("--queries", required=True)
    ev.add_argument("--no-icp", action="store_true", help="skip registration")
    common(ev, "output results directory")
    ev.set_defaults(func=cmd_evaluate)

    dg = sub.add_parser("degrade", help="noise a fraction of query range images and compare")
    dg.add_argument("--map", required=True)
    dg.add_argument("--queries", required=True)
    dg.add_argument("--fraction", type=float, default=0.4)
    dg.add_argument("--variance", type=float, default=0.015)
    common(dg, "output results directory")
    dg.set_defaults(func=cmd_degrade)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
