import { describe, expect, it } from "vitest";

import {
  ArmDescription,
  chainPoints,
  distance,
  forwardKinematics,
  toolAxis,
  toolPosition,
  totalReach,
  validateArm,
  wrapAngle,
} from "../src/kinematics";

// The reference arm exactly as the server describes it in its hello message.
const ARM: ArmDescription = {
  name: "lab-arm-5dof",
  joints: ["base_yaw", "shoulder_pitch", "elbow_pitch", "wrist_pitch", "wrist_roll"],
  lower_limits: [-3.1, -1.92, -2.36, -2.09, -3.1],
  upper_limits: [3.1, 1.92, 2.36, 2.09, 3.1],
  max_velocities: [2.6, 2.6, 2.6, 2.6, 2.6],
  link_lengths: [0.1, 0.15, 0.15, 0.06, 0.0],
  tool_offset: 0.04,
};

// Golden poses computed with the server-side kinematics for spot checks.
const GOLDEN: Array<{
  q: number[];
  tool: number[];
  pitch: number;
  roll: number;
  axis: number[];
  wrist: number[];
}> = [
  {
    q: [0, 0, 0, 0, 0],
    tool: [0.39999999999999997, 0.0, 0.1],
    pitch: 0.0,
    roll: 0.0,
    axis: [1.0, 0.0, 0.0],
    wrist: [0.36, 0.0, 0.1],
  },
  {
    q: [0.3, 0.5, -0.8, 0.2, 1.1],
    tool: [0.35771454624956267, 0.11065407616764782, 0.11760245812674669],
    pitch: -0.10000000000000003,
    roll: 1.1,
    axis: [0.9505637859220633, 0.2940438365518558, -0.09983341664682818],
    wrist: [0.3196919948126801, 0.09889232270557359, 0.12159579479261981],
  },
  {
    q: [-1.2, -0.4, 0.9, -0.6, -2.0],
    tool: [0.13381761350512128, -0.34419919164627044, 0.10351773777965008],
    pitch: -0.09999999999999996,
    roll: -2.0,
    axis: [0.36054747502508244, -0.9273827727393141, -0.09983341664682813],
    wrist: [0.119395714504118, -0.3071038807366979, 0.1075110744455232],
  },
  {
    q: [2.0, 1.1, -2.0, 1.5, 0.4],
    tool: [-0.10146262245293243, 0.2216998746907106, 0.1726463149045964],
    pitch: 0.6000000000000002,
    roll: 0.3999999999999999,
    axis: [-0.34346080523435313, 0.7504755509049621, 0.5646424733950355],
    wrist: [-0.0877241902435583, 0.1916808526545121, 0.15006061596879497],
  },
];

describe("wrapAngle", () => {
  it("normalises to (-pi, pi]", () => {
    expect(wrapAngle(0)).toBe(0);
    expect(wrapAngle(Math.PI)).toBeCloseTo(Math.PI, 12);
    expect(wrapAngle(-Math.PI)).toBeCloseTo(Math.PI, 12);
    expect(wrapAngle(3 * Math.PI)).toBeCloseTo(Math.PI, 12);
    expect(wrapAngle((3 * Math.PI) / 2)).toBeCloseTo(-Math.PI / 2, 12);
    expect(wrapAngle(-(3 * Math.PI) / 2)).toBeCloseTo(Math.PI / 2, 12);
    for (let k = -20; k <= 20; k++) {
      const wrapped = wrapAngle(0.77 + k * 2 * Math.PI);
      expect(wrapped).toBeCloseTo(0.77, 9);
    }
  });
});

describe("validateArm", () => {
  it("accepts the reference arm", () => {
    expect(() => validateArm(ARM)).not.toThrow();
  });

  it("rejects mismatched joint counts", () => {
    const bad = { ...ARM, link_lengths: [0.1, 0.15, 0.15] };
    expect(() => validateArm(bad)).toThrow(/5 joints/);
  });
});

describe("chainPoints", () => {
  it("starts at the base and stacks the first link vertically", () => {
    const pts = chainPoints(ARM, [0, 0, 0, 0, 0]);
    expect(pts).toHaveLength(6);
    expect(pts[0]).toEqual([0, 0, 0]);
    expect(pts[1]).toEqual([0, 0, 0.1]);
  });

  it("reaches 0.40 m forward at 0.10 m height when homed", () => {
    const tool = toolPosition(ARM, [0, 0, 0, 0, 0]);
    expect(tool[0]).toBeCloseTo(0.4, 12);
    expect(tool[1]).toBeCloseTo(0, 12);
    expect(tool[2]).toBeCloseTo(0.1, 12);
  });

  it("never exceeds the total reach", () => {
    const reach = totalReach(ARM);
    expect(reach).toBeCloseTo(0.5, 12);
    for (let trial = 0; trial < 500; trial++) {
      const q = Array.from({ length: 5 }, () => (Math.random() - 0.5) * 3.8);
      const tool = toolPosition(ARM, q);
      expect(Math.hypot(tool[0], tool[1], tool[2])).toBeLessThanOrEqual(reach + 1e-12);
    }
  });

  it("matches the server kinematics on golden configurations", () => {
    for (const g of GOLDEN) {
      const pts = chainPoints(ARM, g.q);
      expect(distance(pts[5], g.tool as never)).toBeLessThan(1e-12);
      expect(distance(pts[4], g.wrist as never)).toBeLessThan(1e-12);
    }
  });
});

describe("forwardKinematics", () => {
  it("matches golden pitch/roll and keeps pitch in [-pi/2, pi/2]", () => {
    for (const g of GOLDEN) {
      const pose = forwardKinematics(ARM, g.q);
      expect(pose.pitch).toBeCloseTo(g.pitch, 12);
      expect(pose.roll).toBeCloseTo(g.roll, 12);
      expect(Math.abs(pose.pitch)).toBeLessThanOrEqual(Math.PI / 2 + 1e-12);
    }
    // folded-back wrist: elevation still reported as an acute angle
    const folded = forwardKinematics(ARM, [0, 1.5, 1.0, 0.6, 0]);
    expect(Math.abs(folded.pitch)).toBeLessThanOrEqual(Math.PI / 2 + 1e-12);
  });

  it("roll wraps like the joint angle", () => {
    const pose = forwardKinematics(ARM, [0, 0, 0, 0, 3.0]);
    expect(pose.roll).toBeCloseTo(3.0, 12);
  });
});

describe("toolAxis", () => {
  it("is a unit vector matching the golden frames", () => {
    for (const g of GOLDEN) {
      const axis = toolAxis(ARM, g.q);
      expect(Math.hypot(axis[0], axis[1], axis[2])).toBeCloseTo(1, 12);
      expect(distance(axis, g.axis as never)).toBeLessThan(1e-12);
    }
  });

  it("points along +x at home and +z when pitched straight up", () => {
    expect(distance(toolAxis(ARM, [0, 0, 0, 0, 0]), [1, 0, 0])).toBeLessThan(1e-12);
    const up = toolAxis(ARM, [0, Math.PI / 2, 0, 0, 0]);
    expect(distance(up, [0, 0, 1])).toBeLessThan(1e-12);
  });
});
