"""Command-line entry points.

``armtwin run`` executes a scenario and writes its report; ``armtwin serve``
exposes the live teleop service; ``armtwin bench`` sweeps the planners over a
scene suite; ``armtwin report`` re-emits a stored report as JSON or CSV and
renders figures next to it. Failures print a machine-readable JSON error to
stderr and exit nonzero. ``ARMTWIN_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import list_scenarios, load_scenario, scene_suite
from .errors import ArmTwinError
from .report import emit_report, load_report, render_figures
from .trials import run, run_planning_benchmark

log = logging.getLogger("armtwin.cli")


def _setup_logging():
    level = os.environ.get("ARMTWIN_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _scenario_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "cycles", None) is not None:
        overrides["cycles"] = args.cycles
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "profile", None) is not None:
        overrides["profile"] = args.profile
    if getattr(args, "channel", None) is not None:
        overrides["channel"] = args.channel
    return overrides


def _summarize(report) -> str:
    bits = [
        f"task={report.task}",
        f"profile={report.profile}",
        f"cycles={report.cycles}",
        f"success={report.success_rate:.2f}",
    ]
    agg = report.aggregates
    if isinstance(agg.get("pos_error_mm"), dict) and agg["pos_error_mm"]["mean"] is not None:
        bits.append(f"pos_mm={agg['pos_error_mm']['mean']:.3f}")
    if agg.get("repeatability_mm") is not None:
        bits.append(f"rep_mm={agg['repeatability_mm']:.3f}")
    if isinstance(agg.get("abs_vol_error_ml"), dict) and agg["abs_vol_error_ml"]["mean"] is not None:
        bits.append(f"vol_ml={agg['abs_vol_error_ml']['mean']:.3f}")
    for method, stats in report.planner.items():
        if method != "per_scene":
            bits.append(f"{method}={stats['success_rate']:.2f}")
    return " ".join(bits)


def _emit(report, output: Path, fmt: str, figures: bool) -> list[Path]:
    written = [emit_report(report, output, fmt=fmt)]
    if figures:
        written += render_figures(report, output.parent)
    return written


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario, **_scenario_overrides(args))
    report = run(cfg)
    stem = Path(args.scenario).stem
    output = Path(args.output) if args.output else cfg.output or Path(f"{stem}_report.{args.format}")
    for path in _emit(report, Path(output), args.format, args.figures):
        print(path)
    print(_summarize(report))
    return 0


def cmd_serve(args) -> int:
    from .server import run_teleop_server

    cfg = load_scenario(args.scenario, **_scenario_overrides(args))
    log.info("serving %s on %s", args.scenario, args.bind)
    run_teleop_server(cfg, bind=args.bind)
    return 0


def cmd_bench(args) -> int:
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    cfg = load_scenario(
        "planning_benchmark",
        benchmark={"seeds": args.seeds, "planners": planners},
        **({"rng_seed": args.seed} if args.seed is not None else {}),
    )
    scenes = scene_suite(args.scenes) if args.scenes else None
    report = run_planning_benchmark(cfg, scenes=scenes)
    output = Path(args.output) if args.output else Path(f"bench_report.{args.format}")
    for path in _emit(report, output, args.format, args.figures):
        print(path)
    for method in planners:
        stats = report.planner[method]
        print(
            f"{method}: success={stats['success_rate']:.3f} "
            f"plans={stats['plans']} "
            f"plan_time_mean={report.host[f'plan_time_{method}_mean_s'] * 1e3:.0f}ms"
        )
    print(_summarize(report))
    return 0


def cmd_report(args) -> int:
    report = load_report(args.input)
    output = Path(args.output) if args.output else Path(args.input).with_suffix(f".{args.format}")
    for path in _emit(report, output, args.format, not args.no_figures):
        print(path)
    return 0


def cmd_scenarios(args) -> int:
    for name in list_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="armtwin",
        description="Digital-twin teleoperation simulator for a 5-DOF lab arm.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output_args(p):
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--output", help="report path (default derived from input)")
        p.add_argument("--figures", action="store_true", help="render figures next to the report")

    p_run = sub.add_parser("run", help="execute a scenario and write its report")
    p_run.add_argument("scenario", help="shipped scenario name or a scenario file path")
    p_run.add_argument("--cycles", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--profile", help="emulator profile override (original|improved)")
    p_run.add_argument("--channel", help="channel preset override")
    add_output_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="run the websocket teleop service")
    p_serve.add_argument("--bind", default="127.0.0.1:8075")
    p_serve.add_argument("--profile", help="emulator profile (original|improved)")
    p_serve.add_argument("--channel", help="channel preset")
    p_serve.add_argument("--scenario", default="placement_improved")
    p_serve.set_defaults(func=cmd_serve)

    p_bench = sub.add_parser("bench", help="planner success benchmark over a scene suite")
    p_bench.add_argument("--scenes", help="scene directory (default: shipped suite)")
    p_bench.add_argument("--seeds", type=int, default=100)
    p_bench.add_argument("--planners", default="rrt,prm")
    p_bench.add_argument("--seed", type=int)
    add_output_args(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_report = sub.add_parser("report", help="re-emit a stored report (JSON/CSV + figures)")
    p_report.add_argument("input", help="report JSON produced by 'run' or 'bench'")
    p_report.add_argument("--format", choices=("json", "csv"), default="csv")
    p_report.add_argument("--output")
    p_report.add_argument("--no-figures", action="store_true")
    p_report.set_defaults(func=cmd_report)

    p_list = sub.add_parser("scenarios", help="list shipped scenarios")
    p_list.set_defaults(func=cmd_scenarios)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArmTwinError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
