/**
 * Client-side forward kinematics for the 5-DOF yaw-pitch-pitch-pitch-roll
 * arm, computed from the arm description the server sends in its hello
 * message. Mirrors the server's accumulation order exactly so both sides
 * agree on tool positions to within floating-point rounding.
 */

export interface ArmDescription {
  name: string;
  joints: string[];
  lower_limits: number[];
  upper_limits: number[];
  max_velocities: number[];
  link_lengths: number[];
  tool_offset: number;
}

export type Vec3 = [number, number, number];

export interface ToolPose {
  position: Vec3;
  pitch: number;
  roll: number;
}

export const JOINT_COUNT = 5;

const TWO_PI = 2 * Math.PI;

function flooredMod(a: number, n: number): number {
  return ((a % n) + n) % n;
}

export function wrapAngle(a: number): number {
  // normalise to (-pi, pi]
  return Math.PI - flooredMod(Math.PI - a, TWO_PI);
}

export function validateArm(arm: ArmDescription): void {
  const n = JOINT_COUNT;
  if (
    arm.joints.length !== n ||
    arm.link_lengths.length !== n ||
    arm.lower_limits.length !== n ||
    arm.upper_limits.length !== n ||
    arm.max_velocities.length !== n
  ) {
    throw new Error(`arm description must describe ${n} joints`);
  }
  if (!(arm.tool_offset >= 0)) {
    throw new Error("tool_offset must be >= 0");
  }
}

export function totalReach(arm: ArmDescription): number {
  return arm.link_lengths.reduce((s, v) => s + v, 0) + arm.tool_offset;
}

/**
 * World positions of the joint origins and the tool point, 6 rows:
 * base, shoulder, elbow, wrist-pitch, wrist-roll, tool.
 */
export function chainPoints(arm: ArmDescription, q: ArrayLike<number>): Vec3[] {
  const [L1, L2, L3, L4, L5] = arm.link_lengths;
  const tip = L5 + arm.tool_offset;
  const c1 = Math.cos(q[0]);
  const s1 = Math.sin(q[0]);
  const p2 = q[1];
  const p23 = p2 + q[2];
  const p234 = p23 + q[3];

  const pts: Vec3[] = [
    [0, 0, 0],
    [0, 0, L1],
  ];
  let r = L2 * Math.cos(p2);
  let z = L1 + L2 * Math.sin(p2);
  pts.push([r * c1, r * s1, z]);
  r = r + L3 * Math.cos(p23);
  z = z + L3 * Math.sin(p23);
  pts.push([r * c1, r * s1, z]);
  const cr = Math.cos(p234);
  const sr = Math.sin(p234);
  const r4 = r + L4 * cr;
  const z4 = z + L4 * sr;
  pts.push([r4 * c1, r4 * s1, z4]);
  const rt = r4 + tip * cr;
  const zt = z4 + tip * sr;
  pts.push([rt * c1, rt * s1, zt]);
  return pts;
}

export function toolPosition(arm: ArmDescription, q: ArrayLike<number>): Vec3 {
  return chainPoints(arm, q)[5];
}

/** Unit vector along the tool axis (home: +x; positive pitch raises it). */
export function toolAxis(arm: ArmDescription, q: ArrayLike<number>): Vec3 {
  const c1 = Math.cos(q[0]);
  const s1 = Math.sin(q[0]);
  const p234 = q[1] + q[2] + q[3];
  const cp = Math.cos(p234);
  const sp = Math.sin(p234);
  return [cp * c1, cp * s1, sp];
}

export function forwardKinematics(arm: ArmDescription, q: ArrayLike<number>): ToolPose {
  const pts = chainPoints(arm, q);
  const p234 = q[1] + q[2] + q[3];
  // tool pitch is elevation above horizontal, so it stays in [-pi/2, pi/2]
  const pitch = Math.atan2(Math.sin(p234), Math.abs(Math.cos(p234)));
  return { position: pts[5], pitch, roll: wrapAngle(q[4]) };
}

export function distance(a: Vec3, b: Vec3): number {
  const dx = a[0] - b[0];
  const dy = a[1] - b[1];
  const dz = a[2] - b[2];
  return Math.sqrt(dx * dx + dy * dy + dz * dz);
}
