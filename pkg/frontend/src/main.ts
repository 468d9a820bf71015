/**
 * Browser entry point: connects to the teleop service, then runs a single
 * requestAnimationFrame loop that drains the inbound queue once per frame
 * and redraws both orthographic views plus the HUD. Dragging in either
 * view moves the target marker and streams rate-limited target commands;
 * the banner reports the server's accept/reject decision and the residual
 * from its "reached" events.
 */

import { SessionView, ServerEvent } from "./session";
import { Vec3, totalReach } from "./kinematics";
import { SceneState, ViewKind, renderSparkline, renderView, unproject } from "./render";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function serverUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const given = params.get("server");
  if (given) {
    return given;
  }
  const host = window.location.hostname || "127.0.0.1";
  return `ws://${host}:8075/ws`;
}

function main(): void {
  const topCanvas = el<HTMLCanvasElement>("view-top");
  const sideCanvas = el<HTMLCanvasElement>("view-side");
  const cadenceCanvas = el<HTMLCanvasElement>("spark-cadence");
  const speedCanvas = el<HTMLCanvasElement>("spark-speed");
  const statusLine = el<HTMLSpanElement>("status");
  const infoLine = el<HTMLSpanElement>("info");
  const targetLine = el<HTMLSpanElement>("target-line");
  const eventLine = el<HTMLSpanElement>("event-line");

  const session = new SessionView();
  let target: Vec3 | null = null;
  let targetStatus: SceneState["targetStatus"] = "idle";

  session.onStatus = (status, detail) => {
    statusLine.textContent = `${status} (${detail})`;
    statusLine.className = status;
  };
  session.onHello = (hello) => {
    infoLine.textContent =
      `${hello.arm.name} | profile ${hello.profile} | channel ${hello.channel} | ` +
      `${hello.publish_hz} Hz frames`;
  };
  session.onEvent = (ev: ServerEvent) => {
    if (ev.type === "reached") {
      const err = ev.pos_error_mm as number;
      targetStatus = "accepted";
      eventLine.textContent = `reached target, residual ${err.toFixed(2)} mm`;
    } else if (ev.type === "error") {
      eventLine.textContent = `server: ${String(ev.error)}`;
    }
  };

  session.connect(serverUrl());

  const clampToReach = (p: Vec3): Vec3 => {
    if (!session.arm) {
      return p;
    }
    const reach = totalReach(session.arm) - 1e-3;
    const norm = Math.hypot(p[0], p[1], p[2]);
    if (norm <= reach) {
      return p;
    }
    const k = reach / norm;
    return [p[0] * k, p[1] * k, p[2] * k];
  };

  const beginDrag = (canvas: HTMLCanvasElement, view: ViewKind) => {
    const moveTarget = (ev: PointerEvent) => {
      if (!session.arm || !session.isOpen) {
        return;
      }
      const rect = canvas.getBoundingClientRect();
      const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
      const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
      const current = target ?? [0.3, 0, 0.1];
      const reach = totalReach(session.arm);
      target = clampToReach(
        unproject(view, px, py, canvas.width, canvas.height, reach, current),
      );
      targetStatus = "pending";
      targetLine.textContent =
        `target [${target.map((v) => v.toFixed(3)).join(", ")}] m`;
      session.dragTarget({ position: [target[0], target[1], target[2]] });
    };
    canvas.addEventListener("pointerdown", (ev) => {
      canvas.setPointerCapture(ev.pointerId);
      moveTarget(ev);
      const onMove = (mv: PointerEvent) => moveTarget(mv);
      const onUp = () => {
        canvas.removeEventListener("pointermove", onMove);
        canvas.removeEventListener("pointerup", onUp);
      };
      canvas.addEventListener("pointermove", onMove);
      canvas.addEventListener("pointerup", onUp);
    });
  };
  beginDrag(topCanvas, "top");
  beginDrag(sideCanvas, "side");

  const topCtx = topCanvas.getContext("2d") as CanvasRenderingContext2D;
  const sideCtx = sideCanvas.getContext("2d") as CanvasRenderingContext2D;
  const cadenceCtx = cadenceCanvas.getContext("2d") as CanvasRenderingContext2D;
  const speedCtx = speedCanvas.getContext("2d") as CanvasRenderingContext2D;

  const frame = () => {
    session.drainInbound();
    if (session.arm && session.latest) {
      if (session.lastTarget && !session.lastTarget.accepted) {
        targetStatus = "rejected";
        targetLine.textContent = `rejected: ${String(session.lastTarget.reply.error ?? "")}`;
      }
      const scene: SceneState = {
        arm: session.arm,
        q: session.latest.q,
        target,
        targetStatus,
      };
      renderView(topCtx, "top", scene);
      renderView(sideCtx, "side", scene);
      renderSparkline(cadenceCtx, session.intervalSeries, "frame gap", "ms");
      renderSparkline(speedCtx, session.speedSeries, "max |qdot|", "rad/s");
      const hz = session.frameRateHz();
      infoLine.title =
        `${hz.toFixed(1)} Hz applied | seq ${session.lastSeq} | ` +
        `${session.decodeErrors} decode errors`;
    }
    window.requestAnimationFrame(frame);
  };
  window.requestAnimationFrame(frame);
}

main();
