"""Trial report artifacts: canonical JSON, CSV flattening, and figures.

JSON is the canonical schema. It is versioned, key-sorted and excludes the
machine-dependent ``host`` block, so a given scenario + seed produces
byte-identical files on every run and every machine. CSV flattens the
per-cycle (or per-plan) records, one row each. Figures are rendered
headlessly next to the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import DecodeError, IoError
from .trials import REPORT_FORMAT, CycleRecord, PlanRecord, TrialReport

FORMATS = ("json", "csv")

_CYCLE_COLUMNS = (
    "cycle",
    "success",
    "target_x",
    "target_y",
    "target_z",
    "achieved_x",
    "achieved_y",
    "achieved_z",
    "pos_error_mm",
    "ang_error_deg",
    "alignment_mm",
    "vol_error_ml",
    "cycle_time_s",
    "max_drift_rad",
    "note",
)

_PLAN_COLUMNS = (
    "scene",
    "method",
    "seed",
    "success",
    "waypoints",
    "exec_duration_s",
    "note",
)


# --------------------------------------------------------------------------
# dict / JSON
# --------------------------------------------------------------------------


def report_to_dict(report: TrialReport) -> dict:
    """Plain-data form of a report; canonical, ``host`` excluded."""

    def cycle_row(r: CycleRecord) -> dict:
        return {
            "cycle": r.cycle,
            "success": r.success,
            "target": list(r.target) if r.target is not None else None,
            "achieved": list(r.achieved) if r.achieved is not None else None,
            "pos_error_mm": r.pos_error_mm,
            "ang_error_deg": r.ang_error_deg,
            "alignment_mm": r.alignment_mm,
            "vol_error_ml": r.vol_error_ml,
            "cycle_time_s": r.cycle_time_s,
            "max_drift_rad": r.max_drift_rad,
            "note": r.note,
        }

    def plan_row(r: PlanRecord) -> dict:
        return {
            "scene": r.scene,
            "method": r.method,
            "seed": r.seed,
            "success": r.success,
            "waypoints": r.waypoints,
            "exec_duration_s": r.exec_duration_s,
            "note": r.note,
        }

    return {
        "format": REPORT_FORMAT,
        "task": report.task,
        "profile": report.profile,
        "channel": report.channel,
        "cycles": report.cycles,
        "rng_seed": report.rng_seed,
        "records": [cycle_row(r) for r in report.records],
        "plan_records": [plan_row(r) for r in report.plan_records],
        "aggregates": report.aggregates,
        "energy": report.energy,
        "planner": report.planner,
        "series": list(report.series) if report.series is not None else None,
    }


def report_from_dict(data: dict) -> TrialReport:
    """Rebuild a report from its canonical dict; inverse of report_to_dict."""
    if data.get("format") != REPORT_FORMAT:
        raise DecodeError(f"unsupported report format {data.get('format')!r}")

    def cycle(row: dict) -> CycleRecord:
        return CycleRecord(
            cycle=row["cycle"],
            success=row["success"],
            target=tuple(row["target"]) if row["target"] is not None else None,
            achieved=tuple(row["achieved"]) if row["achieved"] is not None else None,
            pos_error_mm=row["pos_error_mm"],
            ang_error_deg=row["ang_error_deg"],
            alignment_mm=row["alignment_mm"],
            vol_error_ml=row["vol_error_ml"],
            cycle_time_s=row["cycle_time_s"],
            max_drift_rad=row["max_drift_rad"],
            note=row["note"],
        )

    try:
        return TrialReport(
            task=data["task"],
            profile=data["profile"],
            channel=data["channel"],
            cycles=data["cycles"],
            rng_seed=data["rng_seed"],
            records=tuple(cycle(r) for r in data["records"]),
            plan_records=tuple(PlanRecord(**r) for r in data["plan_records"]),
            aggregates=data["aggregates"],
            energy=data["energy"],
            planner=data["planner"],
            series=tuple(data["series"]) if data["series"] is not None else None,
        )
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"malformed report: {exc}")


def canonical_json(report: TrialReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def load_report(path) -> TrialReport:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read report {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"report {path} is not valid JSON: {exc}")
    return report_from_dict(data)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: TrialReport) -> str:
    """One row per cycle (or per planner invocation for benchmarks)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    if report.plan_records:
        writer.writerow(_PLAN_COLUMNS)
        for r in report.plan_records:
            writer.writerow(
                _cell(v)
                for v in (
                    r.scene, r.method, r.seed, r.success,
                    r.waypoints, r.exec_duration_s, r.note,
                )
            )
        return out.getvalue()
    writer.writerow(_CYCLE_COLUMNS)
    for r in report.records:
        target = r.target if r.target is not None else (None, None, None)
        achieved = r.achieved if r.achieved is not None else (None, None, None)
        writer.writerow(
            _cell(v)
            for v in (
                r.cycle, r.success, *target, *achieved,
                r.pos_error_mm, r.ang_error_deg, r.alignment_mm,
                r.vol_error_ml, r.cycle_time_s, r.max_drift_rad, r.note,
            )
        )
    return out.getvalue()


# --------------------------------------------------------------------------
# emission
# --------------------------------------------------------------------------


def emit_report(report: TrialReport, path, fmt: str = "json") -> Path:
    """Write the report to ``path``; returns the written path."""
    if fmt not in FORMATS:
        raise IoError(f"unknown report format {fmt!r} (expected one of {FORMATS})")
    text = canonical_json(report) if fmt == "json" else report_csv(report)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}")
    return path


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _series_figure(plt, report: TrialReport):
    fig, ax = plt.subplots(figsize=(7, 4))
    cycles = [r.cycle for r in report.records]
    if report.task == "pipetting":
        values = [r.vol_error_ml for r in report.records]
        band = report.aggregates.get("band_ml")
        ax.set_ylabel("volume deviation (mL)")
        if band is not None:
            ax.axhline(band, color="crimson", ls="--", lw=1, label=f"band ±{band}")
            ax.axhline(-band, color="crimson", ls="--", lw=1)
    elif report.series is not None:
        values = list(report.series)
        cycles = list(range(len(values)))
        band = report.aggregates.get("band_mm")
        ax.set_ylabel("deviation from mean (mm)")
        if band is not None:
            ax.axhline(band, color="crimson", ls="--", lw=1, label=f"band {band} mm")
    else:
        values = [r.pos_error_mm for r in report.records]
        ax.set_ylabel("positional error (mm)")
    ax.plot(cycles, values, marker="o", ms=3, lw=1)
    ax.set_xlabel("cycle")
    ax.set_title(f"{report.task} / {report.profile}: per-cycle error")
    ax.grid(alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    return fig


def _histogram_figure(plt, report: TrialReport):
    fig, ax = plt.subplots(figsize=(6, 4))
    if report.task == "pipetting":
        values = [r.vol_error_ml for r in report.records if r.vol_error_ml is not None]
        ax.set_xlabel("volume deviation (mL)")
    else:
        values = [r.pos_error_mm for r in report.records if r.pos_error_mm is not None]
        ax.set_xlabel("positional error (mm)")
    if values:
        ax.hist(values, bins=min(20, max(5, len(values) // 3)), edgecolor="black")
    ax.set_ylabel("cycles")
    ax.set_title(f"{report.task} / {report.profile}: error distribution")
    ax.grid(alpha=0.3, axis="y")
    return fig


def _planner_figure(plt, report: TrialReport):
    fig, ax = plt.subplots(figsize=(7, 4))
    per_scene = report.planner.get("per_scene", {})
    scenes = list(per_scene)
    methods = [m for m in report.planner if m != "per_scene"]
    width = 0.8 / max(1, len(methods))
    for i, method in enumerate(methods):
        xs = [j + i * width for j in range(len(scenes))]
        ys = [per_scene[s][method] for s in scenes]
        ax.bar(xs, ys, width=width, label=method)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(scenes))])
    ax.set_xticklabels(scenes, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("success rate")
    ax.set_title("planner success by scene")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    return fig


def render_figures(report: TrialReport, directory) -> list[Path]:
    """Render task-appropriate figures into ``directory``."""
    plt = _plt()
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create figure directory {directory}: {exc}")

    figures = {}
    if report.records:
        figures[f"{report.task}_series.png"] = _series_figure(plt, report)
        figures[f"{report.task}_hist.png"] = _histogram_figure(plt, report)
    if report.planner:
        figures["planner_success.png"] = _planner_figure(plt, report)

    written = []
    for name, fig in figures.items():
        target = directory / name
        try:
            fig.savefig(target, dpi=110)
        except OSError as exc:
            raise IoError(f"cannot write figure {target}: {exc}")
        finally:
            plt.close(fig)
        written.append(target)
    return written
