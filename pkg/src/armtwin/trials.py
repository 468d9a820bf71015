"""Scenario runner: teleop cycles on the full emulator + sync stack.

Four tasks: ``placement`` (pick/place accuracy), ``pipetting`` (volume
deviation at an alignment error), ``repeatability`` (spread of repeated
identical cycles), ``planning_benchmark`` (planner success/timing over the
scene suite). Each run is fully deterministic for a given scenario seed;
wall-clock measurements live in the report's ``host`` block, which is
excluded from equality and from the canonical serialized form.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import Scene, ScenarioConfig, scene_suite
from .emulator import (
    GRAVITY,
    ArmState,
    LabObject,
    electrical_load,
    grasp,
    initial_state,
    pipette_dispense,
    release,
    step,
)
from .errors import NoPathFound, Overweight, OutOfReach, ScenarioError, Unreachable
from .kinematics import (
    ArmModel,
    Pose,
    chain_points,
    forward_kinematics,
    ik_solve,
    ready_q,
    tool_frame,
)
from .planning import Box, PlannerParams, World, path_valid, plan, time_parameterize
from .sync import Channel, JointStateMsg, reconcile, twin_initial

REPORT_FORMAT = 1
TICK_HZ = 100
PUBLISH_HZ = 20

GRASP_TOL = 0.012  # m; generous enough to close on a mis-aimed vial
VIAL_MASS = 0.010  # kg

# bench surface shared by all emulated tasks (planning scenes ship their own)
BENCH_WORLD = World(
    boxes=(Box(lo=np.array([-0.6, -0.6, -0.08]), hi=np.array([0.6, 0.6, -0.03])),),
    clearance=0.005,
)

_CYCLE_FAILURES = (ScenarioError, NoPathFound, Unreachable, Overweight, OutOfReach)


# --------------------------------------------------------------------------
# report types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CycleRecord:
    """One executed cycle; non-applicable metrics stay None."""

    cycle: int
    success: bool
    target: tuple | None = None  # m
    achieved: tuple | None = None  # m
    pos_error_mm: float | None = None
    ang_error_deg: float | None = None
    alignment_mm: float | None = None
    vol_error_ml: float | None = None
    cycle_time_s: float = 0.0
    max_drift_rad: float | None = None
    note: str = ""


@dataclass(frozen=True)
class PlanRecord:
    """One planner invocation of the benchmark."""

    scene: str
    method: str
    seed: int
    success: bool
    waypoints: int = 0
    exec_duration_s: float | None = None
    note: str = ""


@dataclass(frozen=True)
class TrialReport:
    """Complete result of one scenario run.

    ``aggregates`` are recomputable from the records; ``host`` carries
    wall-clock and machine-dependent observations and is excluded from
    equality and canonical serialization.
    """

    task: str
    profile: str
    channel: str
    cycles: int
    rng_seed: int
    records: tuple[CycleRecord, ...] = ()
    plan_records: tuple[PlanRecord, ...] = ()
    aggregates: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    series: tuple[float, ...] | None = None
    host: dict = field(default_factory=dict, compare=False)

    @property
    def success_rate(self) -> float:
        rows = self.records or self.plan_records
        if not rows:
            return 0.0
        return sum(1 for r in rows if r.success) / len(rows)


def _stats(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return {"count": 0, "mean": None, "std": None, "min": None, "max": None}
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


# --------------------------------------------------------------------------
# simulation loop
# --------------------------------------------------------------------------


class _Sim:
    """Single owner of emulator/channel/twin state across a whole run."""

    def __init__(self, cfg: ScenarioConfig, tool: str):
        self.arm = cfg.arm
        self.profile = cfg.profile
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.state = initial_state(self.arm, ready_q(), tool=tool)
        self.channel = Channel(replace(cfg.channel, rng_seed=cfg.rng_seed + 1_000_003))
        self.twin = twin_initial(self.state.q_measured)
        self.v_cap = float(np.max(self.arm.max_velocities))
        self.tick_dt = 1.0 / TICK_HZ
        self.publish_every = TICK_HZ // PUBLISH_HZ
        self.tick = 0
        self.seq = 0
        self.cycle_ticks = 0
        self.cycle_drift = 0.0
        self.current_sum = 0.0
        self.power_sum = 0.0
        self.moving_ticks = 0
        self.total_ticks = 0

    @property
    def now(self) -> float:
        return self.tick * self.tick_dt

    def _payload_fraction(self) -> float:
        tool = chain_points(self.arm, self.state.q_actual)[5]
        torque = self.state.payload * GRAVITY * math.hypot(tool[0], tool[1])
        return min(1.0, torque / self.profile.servo.max_torque)

    def advance(self, command: np.ndarray):
        """One sim tick: servo step, maybe publish, channel, twin, energy."""
        self.tick += 1
        self.state = step(
            self.arm, self.state, command, self.tick_dt, self.profile.servo, self.rng
        )
        inbox = []
        if self.tick % self.publish_every == 0:
            self.seq += 1
            inbox.append(
                JointStateMsg(
                    seq=self.seq,
                    timestamp=self.now,
                    q=self.state.q_measured,
                    qdot=self.state.qdot,
                )
            )
        delivered = self.channel.step(self.now, inbox)
        self.twin = reconcile(self.twin, delivered, self.now, self.v_cap)

        drift = float(np.max(np.abs(self.state.q_actual - self.twin.q_estimate)))
        self.cycle_drift = max(self.cycle_drift, drift)

        # settle tail below 1 mrad/s counts as holding, not moving
        moving = bool(np.any(np.abs(self.state.qdot) > 1e-3))
        current, power = electrical_load(moving, self._payload_fraction(), self.profile.power)
        self.current_sum += current
        self.power_sum += power
        self.moving_ticks += moving
        self.total_ticks += 1
        self.cycle_ticks += 1

    def run_trajectory(self, traj, dwell_s: float):
        n = int(math.ceil(traj.duration / self.tick_dt))
        for k in range(1, n + 1):
            q_cmd, _ = traj.sample(min(k * self.tick_dt, traj.duration))
            self.advance(q_cmd)
        hold = traj.sample(traj.duration)[0]
        for _ in range(int(round(dwell_s / self.tick_dt))):
            self.advance(hold)

    def goto(self, pose: Pose, plan_seed: int, dwell_s: float):
        """IK, plan on the bench world, execute, settle."""
        q_goal, report = ik_solve(self.arm, pose, seed=self.state.q_measured)
        if not report.converged:
            raise ScenarioError(
                f"ik did not converge (residual {report.pos_residual * 1e3:.2f} mm)"
            )
        try:
            path = plan(
                self.arm,
                self.state.q_measured,
                q_goal,
                BENCH_WORLD,
                PlannerParams(rng_seed=plan_seed),
            )
        except NoPathFound as exc:
            raise ScenarioError(f"no path to target: {exc}")
        self.run_trajectory(time_parameterize(self.arm, path), dwell_s)

    def begin_cycle(self):
        self.cycle_ticks = 0
        self.cycle_drift = 0.0

    def cycle_time(self) -> float:
        return self.cycle_ticks * self.tick_dt

    def energy_summary(self) -> dict:
        if self.total_ticks == 0:
            return {}
        return {
            "mean_current_a": self.current_sum / self.total_ticks,
            "mean_power_w": self.power_sum / self.total_ticks,
            "moving_fraction": self.moving_ticks / self.total_ticks,
            "sim_time_s": self.total_ticks * self.tick_dt,
        }


def _require_task(cfg: ScenarioConfig, task: str):
    if cfg.task != task:
        raise ScenarioError(f"scenario task is {cfg.task!r}, expected {task!r}")


def _aimed_pose(target: np.ndarray, pitch: float, roll: float, offset, tilt) -> Pose:
    aimed_pitch = min(max(pitch + tilt, -math.pi / 2), math.pi / 2)
    return Pose(position=target + offset, pitch=aimed_pitch, roll=roll)


def _target_axis(position: np.ndarray, pitch: float) -> np.ndarray:
    yaw = math.atan2(position[1], position[0])
    cp = math.cos(pitch)
    return np.array([cp * math.cos(yaw), cp * math.sin(yaw), math.sin(pitch)])


def _angular_error_deg(arm: ArmModel, q: np.ndarray, target_axis: np.ndarray) -> float:
    _, rot = tool_frame(arm, q)
    cosang = float(np.clip(np.dot(rot[:, 0], target_axis), -1.0, 1.0))
    return math.degrees(math.acos(cosang))


def _plan_seed(cfg: ScenarioConfig, cycle: int, leg: int) -> int:
    return cfg.rng_seed * 1000 + cycle * 10 + leg


def _calibration_offset(targets: dict) -> np.ndarray:
    """Optional static offset added to every commanded target.

    Models an operator-tuned software correction for systematic placement
    bias (e.g. irregular containers); zero unless the scenario sets one.
    """
    calib = np.asarray(targets.get("offset", (0.0, 0.0, 0.0)), dtype=float)
    if calib.shape != (3,):
        raise ScenarioError("targets.offset must be a 3-vector")
    return calib


# --------------------------------------------------------------------------
# pick/place cycles (placement + repeatability)
# --------------------------------------------------------------------------


def _run_pick_place(cfg: ScenarioConfig) -> tuple[list[CycleRecord], dict]:
    targets = cfg.targets
    pick = np.asarray(targets["pick"], dtype=float)
    place = np.asarray(targets["place"], dtype=float)
    pitch = float(targets.get("pitch", -math.pi / 2))
    roll = float(targets.get("roll", 0.0))
    calib = _calibration_offset(targets)
    place_axis = _target_axis(place, pitch)

    sim = _Sim(cfg, tool="gripper")
    aim = cfg.profile.aim
    records: list[CycleRecord] = []
    for cycle in range(cfg.cycles):
        sim.begin_cycle()
        off_pick, tilt_pick = aim.draw(sim.rng)
        off_place, tilt_place = aim.draw(sim.rng)
        try:
            sim.goto(
                _aimed_pose(pick + calib, pitch, roll, off_pick, tilt_pick),
                _plan_seed(cfg, cycle, 0),
                cfg.dwell_s,
            )
            vial = LabObject(f"vial-{cycle}", VIAL_MASS, position=pick)
            sim.state = grasp(sim.arm, sim.state, vial, reach_tol=GRASP_TOL)
            sim.goto(
                _aimed_pose(place + calib, pitch, roll, off_place, tilt_place),
                _plan_seed(cfg, cycle, 1),
                cfg.dwell_s,
            )
            sim.state = release(sim.state)
        except _CYCLE_FAILURES as exc:
            if sim.state.grasped is not None:  # drop payload before the next cycle
                sim.state = release(sim.state)
            records.append(
                CycleRecord(
                    cycle=cycle,
                    success=False,
                    target=tuple(place),
                    cycle_time_s=sim.cycle_time(),
                    max_drift_rad=sim.cycle_drift,
                    note=f"{type(exc).__name__}: {exc}",
                )
            )
            continue

        achieved = chain_points(sim.arm, sim.state.q_measured)[5]
        records.append(
            CycleRecord(
                cycle=cycle,
                success=True,
                target=tuple(place),
                achieved=tuple(achieved),
                pos_error_mm=float(np.linalg.norm(achieved - place)) * 1e3,
                ang_error_deg=_angular_error_deg(sim.arm, sim.state.q_measured, place_axis),
                cycle_time_s=sim.cycle_time(),
                max_drift_rad=sim.cycle_drift,
            )
        )
    return records, sim.energy_summary()


def _deviation_series_mm(records) -> list[float]:
    """Per-cycle distance from the mean achieved position (successes only)."""
    achieved = np.array([r.achieved for r in records if r.success], dtype=float)
    if len(achieved) == 0:
        return []
    center = achieved.mean(axis=0)
    return [float(d) * 1e3 for d in np.linalg.norm(achieved - center, axis=1)]


def _pick_place_aggregates(cfg: ScenarioConfig, records) -> dict:
    ok = [r for r in records if r.success]
    deviations = _deviation_series_mm(records)
    return {
        "success_rate": len(ok) / len(records) if records else 0.0,
        "pos_error_mm": _stats(r.pos_error_mm for r in ok),
        "ang_error_deg": _stats(r.ang_error_deg for r in ok),
        "repeatability_mm": max(deviations) if deviations else None,
        "cycle_time_s": _stats(r.cycle_time_s for r in records),
        "max_drift_rad": _stats(r.max_drift_rad for r in records),
        "band_mm": cfg.band_mm,
        "band_violations": sum(1 for d in deviations if d > cfg.band_mm),
    }


def run_placement_trial(cfg: ScenarioConfig) -> TrialReport:
    """Pick/place accuracy cycles; errors measured at the release pose."""
    _require_task(cfg, "placement")
    started = time.perf_counter()
    records, energy = _run_pick_place(cfg)
    return TrialReport(
        task=cfg.task,
        profile=cfg.profile.name,
        channel=cfg.channel_name,
        cycles=cfg.cycles,
        rng_seed=cfg.rng_seed,
        records=tuple(records),
        aggregates=_pick_place_aggregates(cfg, records),
        energy=energy,
        host=_host_info(started),
    )


def run_repeatability(cfg: ScenarioConfig) -> TrialReport:
    """Identical pick/place cycles; reports the deviation-from-mean series."""
    _require_task(cfg, "repeatability")
    started = time.perf_counter()
    records, energy = _run_pick_place(cfg)
    return TrialReport(
        task=cfg.task,
        profile=cfg.profile.name,
        channel=cfg.channel_name,
        cycles=cfg.cycles,
        rng_seed=cfg.rng_seed,
        records=tuple(records),
        aggregates=_pick_place_aggregates(cfg, records),
        energy=energy,
        series=tuple(_deviation_series_mm(records)),
        host=_host_info(started),
    )


# --------------------------------------------------------------------------
# pipetting
# --------------------------------------------------------------------------


def run_pipetting_trial(cfg: ScenarioConfig) -> TrialReport:
    """Align above a well, dispense, record alignment and volume deviation."""
    _require_task(cfg, "pipetting")
    started = time.perf_counter()
    targets = cfg.targets
    well = np.asarray(targets["well"], dtype=float)
    pitch = float(targets.get("pitch", -math.pi / 2))
    roll = float(targets.get("roll", 0.0))
    volume = float(targets.get("volume_ml", 1.0))
    band = float(targets.get("band_ml", 0.3))
    calib = _calibration_offset(targets)

    sim = _Sim(cfg, tool="pipette")
    aim = cfg.profile.aim
    records: list[CycleRecord] = []
    for cycle in range(cfg.cycles):
        sim.begin_cycle()
        offset, tilt = aim.draw(sim.rng)
        try:
            sim.goto(
                _aimed_pose(well + calib, pitch, roll, offset, tilt),
                _plan_seed(cfg, cycle, 0),
                cfg.dwell_s,
            )
        except _CYCLE_FAILURES as exc:
            records.append(
                CycleRecord(
                    cycle=cycle,
                    success=False,
                    target=tuple(well),
                    cycle_time_s=sim.cycle_time(),
                    max_drift_rad=sim.cycle_drift,
                    note=f"{type(exc).__name__}: {exc}",
                )
            )
            continue

        tool = chain_points(sim.arm, sim.state.q_actual)[5]
        alignment = math.hypot(tool[0] - well[0], tool[1] - well[1])
        dispensed = pipette_dispense(sim.state, volume, alignment, cfg.profile.pipette, sim.rng)
        deviation = dispensed - volume
        records.append(
            CycleRecord(
                cycle=cycle,
                success=abs(deviation) <= band,
                target=tuple(well),
                achieved=tuple(tool),
                alignment_mm=alignment * 1e3,
                vol_error_ml=deviation,
                cycle_time_s=sim.cycle_time(),
                max_drift_rad=sim.cycle_drift,
            )
        )

    completed = [r for r in records if r.vol_error_ml is not None]
    aggregates = {
        "success_rate": sum(1 for r in records if r.success) / len(records) if records else 0.0,
        "abs_vol_error_ml": _stats(abs(r.vol_error_ml) for r in completed),
        "vol_error_ml": _stats(r.vol_error_ml for r in completed),
        "alignment_mm": _stats(r.alignment_mm for r in completed),
        "band_ml": band,
        "cycle_time_s": _stats(r.cycle_time_s for r in records),
        "max_drift_rad": _stats(r.max_drift_rad for r in records),
    }
    return TrialReport(
        task=cfg.task,
        profile=cfg.profile.name,
        channel=cfg.channel_name,
        cycles=cfg.cycles,
        rng_seed=cfg.rng_seed,
        records=tuple(records),
        aggregates=aggregates,
        energy=sim.energy_summary(),
        host=_host_info(started),
    )


# --------------------------------------------------------------------------
# planning benchmark
# --------------------------------------------------------------------------


def run_planning_benchmark(
    cfg: ScenarioConfig, scenes: tuple[Scene, ...] | None = None
) -> TrialReport:
    """RRT and PRM over the scene suite; every path is densely revalidated."""
    _require_task(cfg, "planning_benchmark")
    started = time.perf_counter()
    if scenes is None:
        wanted = cfg.benchmark.get("scenes")
        suite = scene_suite()
        if wanted:
            byname = {s.name: s for s in suite}
            try:
                suite = tuple(byname[name] for name in wanted)
            except KeyError as exc:
                raise ScenarioError(f"unknown scene {exc.args[0]!r}")
        scenes = suite
    seeds = int(cfg.benchmark.get("seeds", 100))
    methods = tuple(cfg.benchmark.get("planners", ("rrt", "prm")))

    records: list[PlanRecord] = []
    plan_wall: dict[str, list[float]] = {m: [] for m in methods}
    for scene in scenes:
        for method in methods:
            for seed in range(seeds):
                t0 = time.perf_counter()
                try:
                    path = plan(
                        cfg.arm,
                        scene.start_q,
                        scene.goal_q,
                        scene.world,
                        PlannerParams(rng_seed=seed),
                        method,
                    )
                except NoPathFound as exc:
                    plan_wall[method].append(time.perf_counter() - t0)
                    records.append(
                        PlanRecord(scene.name, method, seed, False, note=str(exc))
                    )
                    continue
                plan_wall[method].append(time.perf_counter() - t0)
                if not path_valid(cfg.arm, path, scene.world, resolution=0.002):
                    records.append(
                        PlanRecord(
                            scene.name, method, seed, False,
                            waypoints=len(path), note="dense validation failed",
                        )
                    )
                    continue
                records.append(
                    PlanRecord(
                        scene.name, method, seed, True,
                        waypoints=len(path),
                        exec_duration_s=time_parameterize(cfg.arm, path).duration,
                    )
                )

    planner = {}
    for method in methods:
        rows = [r for r in records if r.method == method]
        planner[method] = {
            "plans": len(rows),
            "success_rate": sum(1 for r in rows if r.success) / len(rows) if rows else 0.0,
            "exec_duration_s": _stats(r.exec_duration_s for r in rows if r.success),
        }
    planner["per_scene"] = {
        scene.name: {
            method: (
                lambda rows: sum(1 for r in rows if r.success) / len(rows) if rows else 0.0
            )([r for r in records if r.scene == scene.name and r.method == method])
            for method in methods
        }
        for scene in scenes
    }

    host = _host_info(started)
    for method in methods:
        arr = np.array(plan_wall[method]) if plan_wall[method] else np.zeros(1)
        host[f"plan_time_{method}_mean_s"] = float(arr.mean())
        host[f"plan_time_{method}_p95_s"] = float(np.percentile(arr, 95))
    return TrialReport(
        task=cfg.task,
        profile=cfg.profile.name,
        channel=cfg.channel_name,
        cycles=cfg.cycles,
        rng_seed=cfg.rng_seed,
        plan_records=tuple(records),
        aggregates={
            "success_rate": sum(1 for r in records if r.success) / len(records)
            if records
            else 0.0,
            "scenes": len(scenes),
            "seeds": seeds,
        },
        planner=planner,
        host=host,
    )


def _host_info(started: float) -> dict:
    """Machine-dependent observations; informational only."""
    info = {"wall_s": time.perf_counter() - started}
    try:
        import psutil

        proc = psutil.Process()
        info["rss_mb"] = proc.memory_info().rss / 1e6
        info["cpu_percent"] = proc.cpu_percent(interval=None)
    except Exception:
        pass
    return info


RUNNERS = {
    "placement": run_placement_trial,
    "pipetting": run_pipetting_trial,
    "repeatability": run_repeatability,
    "planning_benchmark": run_planning_benchmark,
}


def run(cfg: ScenarioConfig) -> TrialReport:
    """Dispatch a scenario to its task runner."""
    return RUNNERS[cfg.task](cfg)
