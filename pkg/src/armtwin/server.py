"""WebSocket teleop service: live emulator + channel + twin behind one socket.

One background task owns all simulation state and advances it tick by tick;
client handlers only enqueue commands, which the loop consumes between ticks,
so no state is ever touched concurrently.

Framing contract (shared with any client):

* server -> client, binary: a wire-encoded joint-state frame (``sync.encode``)
  carrying the digital-twin estimate, sent at the publish rate.
* server -> client, text: JSON objects tagged by ``type`` — a ``hello``
  description on connect, one reply per command (``ok`` true/false), and
  broadcast events (``reached``, ``error``).
* client -> server, text: JSON commands, tagged by ``cmd``:

  - ``{"cmd": "target", "position": [x, y, z], "pitch": p, "roll": r}``
  - ``{"cmd": "jog", "joint": i, "delta": rad}``
  - ``{"cmd": "scenario", "action": "start" | "stop"}``
  - ``{"cmd": "metrics"}``
  - ``{"cmd": "fk", "q": [five joint angles]}``

Anything else - binary input, bad JSON, unknown commands, malformed fields -
earns an ``error`` reply and leaves the simulation running.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import math
from contextlib import asynccontextmanager, suppress
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import ScenarioConfig
from .emulator import electrical_load, initial_state, step
from .errors import NoPathFound, Unreachable
from .kinematics import Pose, chain_points, ik_solve, ready_q, tool_frame
from .planning import PlannerParams, plan, time_parameterize
from .sync import WIRE_SIZE, WIRE_VERSION, Channel, JointStateMsg, encode, reconcile, twin_initial
from .trials import BENCH_WORLD, PUBLISH_HZ, TICK_HZ

log = logging.getLogger("armtwin.server")

TARGET_SETTLE_S = 0.4  # hold time after a manual target before "reached" fires


class TeleopSession:
    """Single owner of the simulated arm; synchronous and deterministic.

    ``handle`` applies one operator command and returns the reply dict;
    ``tick`` advances the simulation by one step and returns the broadcast
    frame when one is due. Events raised between ticks (target reached,
    scenario failures) queue up in ``drain_events``.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.arm = cfg.arm
        self.profile = cfg.profile
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.state = initial_state(self.arm, ready_q(), tool="gripper")
        self.channel = Channel(replace(cfg.channel, rng_seed=cfg.rng_seed + 1_000_003))
        self.twin = twin_initial(self.state.q_measured)
        self.v_cap = float(np.max(self.arm.max_velocities))
        self.tick_dt = 1.0 / TICK_HZ
        self.publish_every = TICK_HZ // PUBLISH_HZ

        self.ticks = 0
        self.seq = 0
        self.frames = 0
        self.hold = self.state.q_actual.copy()
        self.traj = None
        self.traj_t = 0.0
        self.settle_left = 0.0
        self.target: Pose | None = None
        self.program = None  # iterator of (leg name, Pose) when a scenario runs
        self.legs_done = 0
        self.cycles_done = 0
        self.plan_count = 0
        self.drift_peak = 0.0
        self.last_error_mm = None
        self.current_sum = 0.0
        self.power_sum = 0.0
        self._events: list[dict] = []

    # -- description ------------------------------------------------------

    def hello(self) -> dict:
        return {
            "type": "hello",
            "format": 1,
            "arm": {
                "name": self.arm.name,
                "joints": [j.name for j in self.arm.joints],
                "lower_limits": [float(v) for v in self.arm.lower_limits],
                "upper_limits": [float(v) for v in self.arm.upper_limits],
                "max_velocities": [float(v) for v in self.arm.max_velocities],
                "link_lengths": [float(v) for v in self.arm.link_lengths],
                "tool_offset": float(self.arm.tool_offset),
            },
            "profile": self.profile.name,
            "channel": self.cfg.channel_name,
            "tick_hz": TICK_HZ,
            "publish_hz": PUBLISH_HZ,
            "wire": {"version": WIRE_VERSION, "frame_size": WIRE_SIZE},
        }

    # -- commands ---------------------------------------------------------

    def handle(self, raw) -> dict:
        """Apply one client frame; always returns a reply, never raises."""
        if not isinstance(raw, str):
            return self._error("binary input is not a valid command frame")
        try:
            cmd = json.loads(raw)
        except json.JSONDecodeError as exc:
            return self._error(f"invalid JSON: {exc}")
        if not isinstance(cmd, dict) or "cmd" not in cmd:
            return self._error("command must be an object with a 'cmd' field")
        name = cmd["cmd"]
        handler = getattr(self, f"_cmd_{name}", None) if isinstance(name, str) else None
        if handler is None:
            return self._error(f"unknown command {name!r}")
        try:
            return handler(cmd)
        except (KeyError, TypeError, ValueError) as exc:
            return self._error(f"malformed {name} command: {exc}")

    def _error(self, message: str) -> dict:
        log.warning("rejected command: %s", message)
        return {"type": "error", "ok": False, "error": message}

    def _cmd_target(self, cmd: dict) -> dict:
        pose = Pose(
            position=np.asarray([float(v) for v in cmd["position"]], dtype=float),
            pitch=float(cmd.get("pitch", -math.pi / 2)),
            roll=float(cmd.get("roll", 0.0)),
        )
        try:
            traj = self._plan_to(pose)
        except (NoPathFound, Unreachable, ValueError) as exc:
            return self._error(str(exc))
        self.program = None
        self._begin(traj, pose, TARGET_SETTLE_S)
        return {
            "type": "target",
            "ok": True,
            "duration_s": traj.duration,
            "waypoints": len(traj.waypoints),
        }

    def _cmd_jog(self, cmd: dict) -> dict:
        joint = int(cmd["joint"])
        delta = float(cmd["delta"])
        if not 0 <= joint < 5:
            return self._error(f"joint index {joint} out of range")
        if not math.isfinite(delta):
            return self._error("jog delta must be finite")
        q = self.state.q_actual.copy()
        q[joint] += delta
        self.program = None
        self.traj = None
        self.target = None
        self.hold = self.arm.clamp(q)
        return {"type": "jog", "ok": True, "hold": [float(v) for v in self.hold]}

    def _cmd_scenario(self, cmd: dict) -> dict:
        action = cmd["action"]
        if action == "stop":
            self.program = None
            self.traj = None
            self.target = None
            self.hold = self.state.q_actual.copy()
            return {"type": "scenario", "ok": True, "state": "stopped"}
        if action != "start":
            return self._error(f"unknown scenario action {action!r}")
        legs = self._scenario_legs()
        if not legs:
            return self._error("scenario has no targets to cycle")
        self.program = itertools.cycle(legs)
        return {
            "type": "scenario",
            "ok": True,
            "state": "started",
            "legs": [name for name, _ in legs],
        }

    def _cmd_metrics(self, cmd: dict) -> dict:
        ticks = max(1, self.ticks)
        return {
            "type": "metrics",
            "ok": True,
            "sim_time_s": self.ticks * self.tick_dt,
            "frames": self.frames,
            "legs_done": self.legs_done,
            "cycles_done": self.cycles_done,
            "drift_peak_rad": self.drift_peak,
            "last_error_mm": self.last_error_mm,
            "mean_current_a": self.current_sum / ticks,
            "mean_power_w": self.power_sum / ticks,
            "moving": self.traj is not None,
            "scenario_running": self.program is not None,
            "q": [float(v) for v in self.state.q_measured],
        }

    def _cmd_fk(self, cmd: dict) -> dict:
        q = np.asarray([float(v) for v in cmd["q"]], dtype=float)
        if q.shape != (5,) or not np.all(np.isfinite(q)):
            return self._error("fk expects five finite joint angles")
        point, rot = tool_frame(self.arm, q)
        return {
            "type": "fk",
            "ok": True,
            "tool": [float(v) for v in point],
            "axis": [float(v) for v in rot[:, 0]],
        }

    # -- motion -----------------------------------------------------------

    def _scenario_legs(self) -> list[tuple[str, Pose]]:
        targets = self.cfg.targets
        pitch = float(targets.get("pitch", -math.pi / 2))
        roll = float(targets.get("roll", 0.0))
        legs = []
        for name in ("pick", "place", "well"):
            if name in targets:
                position = np.asarray(targets[name], dtype=float)
                legs.append((name, Pose(position=position, pitch=pitch, roll=roll)))
        return legs

    def _plan_to(self, pose: Pose):
        q_goal, report = ik_solve(self.arm, pose, seed=self.state.q_measured)
        if not report.converged:
            raise ValueError(
                f"target unreachable (best residual {report.pos_residual * 1e3:.1f} mm)"
            )
        self.plan_count += 1
        path = plan(
            self.arm,
            self.state.q_measured,
            q_goal,
            BENCH_WORLD,
            PlannerParams(rng_seed=self.cfg.rng_seed * 1000 + self.plan_count),
        )
        return time_parameterize(self.arm, path)

    def _begin(self, traj, pose: Pose, settle_s: float):
        self.traj = traj
        self.traj_t = 0.0
        self.settle_left = settle_s
        self.target = pose

    def _finish_leg(self):
        achieved = chain_points(self.arm, self.state.q_measured)[5]
        error_mm = float(np.linalg.norm(achieved - self.target.position)) * 1e3
        self.last_error_mm = error_mm
        self.legs_done += 1
        event = {
            "type": "reached",
            "target": [float(v) for v in self.target.position],
            "pos_error_mm": error_mm,
            "legs_done": self.legs_done,
        }
        self.hold = self.traj.sample(self.traj.duration)[0]
        self.traj = None
        self.target = None
        if self.program is not None:
            self.cycles_done = self.legs_done // max(1, len(self._scenario_legs()))
            event["cycles_done"] = self.cycles_done
        self._events.append(event)

    def _advance_program(self):
        name, pose = next(self.program)
        try:
            traj = self._plan_to(pose)
        except (NoPathFound, Unreachable, ValueError) as exc:
            self.program = None
            self._events.append(
                {"type": "error", "ok": False, "error": f"scenario leg {name!r}: {exc}"}
            )
            return
        self._begin(traj, pose, self.cfg.dwell_s)

    def tick(self) -> bytes | None:
        """One simulation step; returns the wire frame when one is due."""
        if self.traj is None and self.program is not None:
            self._advance_program()

        if self.traj is not None:
            self.traj_t += self.tick_dt
            command, _ = self.traj.sample(min(self.traj_t, self.traj.duration))
            if self.traj_t >= self.traj.duration:
                self.settle_left -= self.tick_dt
                if self.settle_left <= 0:
                    self._finish_leg()
        else:
            command = self.hold

        self.ticks += 1
        now = self.ticks * self.tick_dt
        self.state = step(self.arm, self.state, command, self.tick_dt, self.profile.servo, self.rng)

        inbox = []
        frame = None
        if self.ticks % self.publish_every == 0:
            self.seq += 1
            inbox.append(
                JointStateMsg(
                    seq=self.seq, timestamp=now, q=self.state.q_measured, qdot=self.state.qdot
                )
            )
        delivered = self.channel.step(now, inbox)
        self.twin = reconcile(self.twin, delivered, now, self.v_cap)
        self.drift_peak = max(
            self.drift_peak, float(np.max(np.abs(self.state.q_actual - self.twin.q_estimate)))
        )
        moving = bool(np.any(np.abs(self.state.qdot) > 1e-3))
        current, power = electrical_load(moving, 0.0, self.profile.power)
        self.current_sum += current
        self.power_sum += power

        if self.ticks % self.publish_every == 0:
            self.frames += 1
            frame = encode(
                JointStateMsg(
                    seq=self.frames,
                    timestamp=now,
                    q=self.twin.q_estimate,
                    qdot=np.clip(self.twin.qdot_base, -self.v_cap, self.v_cap),
                )
            )
        return frame

    def drain_events(self) -> list[dict]:
        events, self._events = self._events, []
        return events


# --------------------------------------------------------------------------
# asyncio wiring
# --------------------------------------------------------------------------


class Hub:
    """Runs the session loop and fans frames out to connected sockets."""

    def __init__(self, cfg: ScenarioConfig, tick_scale: float = 1.0):
        self.session = TeleopSession(cfg)
        self.tick_scale = tick_scale
        self.clients: set = set()
        self.commands: asyncio.Queue = asyncio.Queue()
        self.hello_text = json.dumps(self.session.hello())

    async def loop(self):
        aio = asyncio.get_running_loop()
        period = self.session.tick_dt / self.tick_scale if self.tick_scale > 0 else 0.0
        next_due = aio.time() + period
        while True:
            for _ in range(32):  # bounded command intake per tick
                try:
                    ws, raw = self.commands.get_nowait()
                except asyncio.QueueEmpty:
                    break
                reply = self.session.handle(raw)
                await self._send_json(ws, reply)
            frame = self.session.tick()
            if frame is not None and self.clients:
                await self._broadcast(frame, binary=True)
            for event in self.session.drain_events():
                await self._broadcast(json.dumps(event), binary=False)
            if period > 0:
                # pace against absolute deadlines so the publish rate holds
                delay = next_due - aio.time()
                next_due += period
                if delay < -1.0:  # fell far behind; resynchronize
                    next_due = aio.time() + period
                await asyncio.sleep(max(0.0, delay))
            else:
                await asyncio.sleep(0)

    async def _send_json(self, ws, payload: dict):
        try:
            await ws.send_text(json.dumps(payload))
        except Exception:
            self.clients.discard(ws)

    async def _broadcast(self, payload, binary: bool):
        for ws in tuple(self.clients):
            try:
                if binary:
                    await ws.send_bytes(payload)
                else:
                    await ws.send_text(payload)
            except Exception:
                self.clients.discard(ws)


def create_app(cfg: ScenarioConfig, tick_scale: float = 1.0):
    """FastAPI app exposing the teleop session on ``/ws``."""
    hub = Hub(cfg, tick_scale)

    @asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(hub.loop())
        try:
            yield
        finally:
            task.cancel()
            with suppress(asyncio.CancelledError):
                await task

    app = FastAPI(lifespan=lifespan)
    app.state.hub = hub

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        await ws.send_text(hub.hello_text)
        hub.clients.add(ws)
        try:
            while True:
                message = await ws.receive()
                if message["type"] == "websocket.disconnect":
                    break
                raw = message["text"] if "text" in message and message["text"] is not None else message.get("bytes")
                await hub.commands.put((ws, raw))
        except WebSocketDisconnect:
            pass
        finally:
            hub.clients.discard(ws)

    return app


def run_teleop_server(cfg: ScenarioConfig, bind: str = "127.0.0.1:8075"):
    """Serve until interrupted; ``bind`` is ``host:port``."""
    import uvicorn

    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind must look like host:port, got {bind!r}")
    uvicorn.run(create_app(cfg), host=host, port=int(port), log_level="warning")
