/**
 * Orthographic two-view renderer for the operator console: a top view
 * (world x/y) and a side view (world x/z), both drawn on plain 2D canvas.
 * Everything drawn comes from server state (decoded twin frames run
 * through the client FK) plus the operator's target marker.
 */

import { ArmDescription, Vec3, chainPoints, toolAxis, totalReach } from "./kinematics";
import { Sample } from "./session";

export type ViewKind = "top" | "side";

export interface SceneState {
  arm: ArmDescription;
  q: ArrayLike<number>;
  target: Vec3 | null;
  targetStatus: "idle" | "pending" | "accepted" | "rejected";
}

const COLORS = {
  background: "#10141a",
  grid: "#1d2430",
  reach: "#2a3750",
  link: "#7fd4ff",
  joint: "#cfe9ff",
  tool: "#ffd166",
  axis: "#ffd166",
  target: "#7dff9a",
  targetRejected: "#ff6b6b",
  text: "#9fb2c8",
};

interface Frame2D {
  scale: number; // px per metre
  cx: number; // canvas x of world origin
  cy: number; // canvas y of world origin
}

function viewFrame(view: ViewKind, width: number, height: number, reach: number): Frame2D {
  const margin = 24;
  const scale = (Math.min(width, height) / 2 - margin) / reach;
  if (view === "top") {
    return { scale, cx: width / 2, cy: height / 2 };
  }
  // side view: keep the base near the lower third so the arm has headroom
  return { scale, cx: width / 2, cy: height * 0.72 };
}

/** World point -> canvas pixel for the given view. */
export function project(view: ViewKind, p: Vec3, frame: Frame2D): [number, number] {
  if (view === "top") {
    return [frame.cx + p[0] * frame.scale, frame.cy - p[1] * frame.scale];
  }
  return [frame.cx + p[0] * frame.scale, frame.cy - p[2] * frame.scale];
}

/**
 * Canvas pixel -> world point for the given view, holding the coordinate
 * the view cannot see at its current value.
 */
export function unproject(
  view: ViewKind,
  px: number,
  py: number,
  width: number,
  height: number,
  reach: number,
  current: Vec3,
): Vec3 {
  const frame = viewFrame(view, width, height, reach);
  const a = (px - frame.cx) / frame.scale;
  const b = (frame.cy - py) / frame.scale;
  if (view === "top") {
    return [a, b, current[2]];
  }
  return [a, current[1], b];
}

function drawGrid(
  ctx: CanvasRenderingContext2D,
  view: ViewKind,
  frame: Frame2D,
  reach: number,
): void {
  const { width, height } = ctx.canvas;
  ctx.strokeStyle = COLORS.grid;
  ctx.lineWidth = 1;
  const stepPx = 0.1 * frame.scale; // 10 cm grid
  for (let x = frame.cx % stepPx; x < width; x += stepPx) {
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, height);
    ctx.stroke();
  }
  for (let y = frame.cy % stepPx; y < height; y += stepPx) {
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(width, y);
    ctx.stroke();
  }

  // reach envelope
  ctx.strokeStyle = COLORS.reach;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  if (view === "top") {
    ctx.arc(frame.cx, frame.cy, reach * frame.scale, 0, 2 * Math.PI);
  } else {
    ctx.arc(frame.cx, frame.cy, reach * frame.scale, Math.PI, 2 * Math.PI);
  }
  ctx.stroke();

  ctx.fillStyle = COLORS.text;
  ctx.font = "11px system-ui, sans-serif";
  ctx.fillText(view === "top" ? "top (x right, y up)" : "side (x right, z up)", 8, 14);
}

function drawChain(
  ctx: CanvasRenderingContext2D,
  view: ViewKind,
  frame: Frame2D,
  scene: SceneState,
): void {
  const pts = chainPoints(scene.arm, scene.q);
  ctx.strokeStyle = COLORS.link;
  ctx.lineWidth = 3;
  ctx.lineJoin = "round";
  ctx.beginPath();
  const [x0, y0] = project(view, pts[0], frame);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < pts.length; i++) {
    const [x, y] = project(view, pts[i], frame);
    ctx.lineTo(x, y);
  }
  ctx.stroke();

  ctx.fillStyle = COLORS.joint;
  for (let i = 0; i < pts.length - 1; i++) {
    const [x, y] = project(view, pts[i], frame);
    ctx.beginPath();
    ctx.arc(x, y, 3.5, 0, 2 * Math.PI);
    ctx.fill();
  }

  // tool point + a short whisker along the tool axis
  const tool = pts[5];
  const axis = toolAxis(scene.arm, scene.q);
  const whisker: Vec3 = [
    tool[0] + 0.03 * axis[0],
    tool[1] + 0.03 * axis[1],
    tool[2] + 0.03 * axis[2],
  ];
  const [tx, ty] = project(view, tool, frame);
  const [wx, wy] = project(view, whisker, frame);
  ctx.strokeStyle = COLORS.axis;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(tx, ty);
  ctx.lineTo(wx, wy);
  ctx.stroke();
  ctx.fillStyle = COLORS.tool;
  ctx.beginPath();
  ctx.arc(tx, ty, 5, 0, 2 * Math.PI);
  ctx.fill();
}

function drawTarget(
  ctx: CanvasRenderingContext2D,
  view: ViewKind,
  frame: Frame2D,
  scene: SceneState,
): void {
  if (!scene.target) {
    return;
  }
  const [x, y] = project(view, scene.target, frame);
  const color = scene.targetStatus === "rejected" ? COLORS.targetRejected : COLORS.target;
  ctx.strokeStyle = color;
  ctx.lineWidth = scene.targetStatus === "pending" ? 1.5 : 2;
  ctx.beginPath();
  ctx.arc(x, y, 8, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(x - 12, y);
  ctx.lineTo(x + 12, y);
  ctx.moveTo(x, y - 12);
  ctx.lineTo(x, y + 12);
  ctx.stroke();
}

/** Render one orthographic view of the scene. */
export function renderView(
  ctx: CanvasRenderingContext2D,
  view: ViewKind,
  scene: SceneState,
): void {
  const { width, height } = ctx.canvas;
  const reach = totalReach(scene.arm);
  const frame = viewFrame(view, width, height, reach);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);
  drawGrid(ctx, view, frame, reach);
  drawChain(ctx, view, frame, scene);
  drawTarget(ctx, view, frame, scene);
}

/** Tiny rolling-series plot for the HUD (cadence, joint speed). */
export function renderSparkline(
  ctx: CanvasRenderingContext2D,
  series: Sample[],
  label: string,
  unit: string,
): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);
  ctx.fillStyle = COLORS.text;
  ctx.font = "10px system-ui, sans-serif";
  if (series.length < 2) {
    ctx.fillText(`${label}: --`, 4, 12);
    return;
  }
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    lo = Math.min(lo, s.value);
    hi = Math.max(hi, s.value);
  }
  if (hi - lo < 1e-9) {
    hi = lo + 1e-9;
  }
  const t0 = series[0].t;
  const t1 = series[series.length - 1].t;
  const span = Math.max(1, t1 - t0);
  ctx.strokeStyle = COLORS.link;
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let i = 0; i < series.length; i++) {
    const x = ((series[i].t - t0) / span) * (width - 8) + 4;
    const y = height - 6 - ((series[i].value - lo) / (hi - lo)) * (height - 22);
    if (i === 0) {
      ctx.moveTo(x, y);
    } else {
      ctx.lineTo(x, y);
    }
  }
  ctx.stroke();
  const last = series[series.length - 1].value;
  ctx.fillText(`${label}: ${last.toFixed(1)} ${unit}`, 4, 12);
}
