"""Kinematics of the 5-DOF serial arm.

Chain convention (axis layout is fixed: yaw-pitch-pitch-pitch-roll):

* joint 0, base yaw    -- rotates about the world +z axis. Its link is the
  vertical base column, so its ``link_length`` points along +z.
* joints 1-3, pitch    -- shoulder / elbow / wrist, rotating about the yawed
  horizontal axis. Positive pitch raises the tool.
* joint 4, wrist roll  -- rotates about the tool axis itself. Its link (plus
  ``tool_offset``) extends along that axis, so rolling never displaces the
  tool point.

Home (all joints at zero) leaves the arm stretched along +x at base-column
height. A pose is five-dimensional: tool position, tool pitch and tool roll.
Tool pitch is the elevation of the tool axis above the horizontal plane and
therefore always lies in [-pi/2, pi/2]; tool roll is the wrist-roll angle.
Angles are normalised to (-pi, pi] at public boundaries.

All operations are pure functions; ``ArmModel`` is immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import Degenerate, Unreachable

TWO_PI = 2.0 * math.pi

AXIS_LAYOUT = ("yaw", "pitch", "pitch", "pitch", "roll")

JOINT_COUNT = 5


def wrap_angle(a):
    """Normalise an angle (scalar or array) to (-pi, pi]."""
    return np.pi - (np.pi - np.asarray(a)) % TWO_PI


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint and the rigid link that follows it."""

    name: str
    axis: str  # "yaw" | "pitch" | "roll"
    link_length: float  # m
    lower_limit: float  # rad
    upper_limit: float  # rad
    max_velocity: float  # rad/s
    max_acceleration: float  # rad/s^2

    def __post_init__(self):
        if self.axis not in ("yaw", "pitch", "roll"):
            raise ValueError(f"unknown joint axis {self.axis!r}")
        if not math.isfinite(self.link_length) or self.link_length < 0:
            raise ValueError(f"{self.name}: link_length must be finite and >= 0")
        if not (-math.pi < self.lower_limit < self.upper_limit <= math.pi):
            raise ValueError(f"{self.name}: limits must satisfy -pi < lower < upper <= pi")
        if self.max_velocity <= 0 or self.max_acceleration <= 0:
            raise ValueError(f"{self.name}: velocity/acceleration limits must be > 0")


@dataclass(frozen=True)
class ArmModel:
    """Kinematic description of the 5-DOF chain. Immutable."""

    name: str
    joints: tuple[JointSpec, ...]
    tool_offset: float  # m, rigid extension past the wrist-roll joint

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) != JOINT_COUNT:
            raise ValueError(f"expected {JOINT_COUNT} joints, got {len(self.joints)}")
        axes = tuple(j.axis for j in self.joints)
        if axes != AXIS_LAYOUT:
            raise ValueError(f"joint axes must be {AXIS_LAYOUT}, got {axes}")
        # The terminal roll joint spins about the tool axis; its own link may
        # be zero because tool_offset supplies the final segment.
        for j in self.joints[:-1]:
            if j.link_length <= 0:
                raise ValueError(f"{j.name}: structural link length must be > 0")
        if self.tool_offset < 0:
            raise ValueError("tool_offset must be >= 0")
        if self.total_reach <= 0:
            raise ValueError("total reach must be > 0")

    @property
    def total_reach(self) -> float:
        return sum(j.link_length for j in self.joints) + self.tool_offset

    @cached_property
    def link_lengths(self) -> np.ndarray:
        return np.array([j.link_length for j in self.joints])

    @cached_property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.lower_limit for j in self.joints])

    @cached_property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.upper_limit for j in self.joints])

    @cached_property
    def max_velocities(self) -> np.ndarray:
        return np.array([j.max_velocity for j in self.joints])

    @cached_property
    def max_accelerations(self) -> np.ndarray:
        return np.array([j.max_acceleration for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits, self.upper_limits)

    def within_limits(self, q: np.ndarray, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(
            np.all(q >= self.lower_limits - tol) and np.all(q <= self.upper_limits + tol)
        )


def default_arm() -> ArmModel:
    """Desktop-scale reference arm: 0.10/0.15/0.15/0.06 m links + 0.04 m tool."""
    return ArmModel(
        name="lab-arm-5dof",
        joints=(
            JointSpec("base_yaw", "yaw", 0.10, -3.10, 3.10, 2.6, 10.0),
            JointSpec("shoulder_pitch", "pitch", 0.15, -1.92, 1.92, 2.6, 10.0),
            JointSpec("elbow_pitch", "pitch", 0.15, -2.36, 2.36, 2.6, 10.0),
            JointSpec("wrist_pitch", "pitch", 0.06, -2.09, 2.09, 2.6, 10.0),
            JointSpec("wrist_roll", "roll", 0.0, -3.10, 3.10, 2.6, 10.0),
        ),
        tool_offset=0.04,
    )


def ready_q() -> np.ndarray:
    """Generic elbow-bent start configuration, level tool, away from singularities."""
    return np.array([0.0, 0.6, -1.0, 0.4, 0.0])


def as_joint_vector(q: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and copy a joint vector: shape (5,), finite."""
    arr = np.array(q, dtype=float)
    if arr.shape != (JOINT_COUNT,):
        raise ValueError(f"joint vector must have shape ({JOINT_COUNT},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("joint vector must be finite")
    return arr


@dataclass(frozen=True)
class Pose:
    """Cartesian tool target: position (m) + tool pitch + tool roll (rad)."""

    position: np.ndarray  # (3,)
    pitch: float
    roll: float

    def __post_init__(self):
        pos = np.array(self.position, dtype=float)
        if pos.shape != (3,):
            raise ValueError("position must have shape (3,)")
        if not (np.all(np.isfinite(pos)) and math.isfinite(self.pitch) and math.isfinite(self.roll)):
            raise ValueError("pose components must be finite")
        if not -math.pi / 2 - 1e-12 <= self.pitch <= math.pi / 2 + 1e-12:
            raise ValueError("pitch must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "roll", float(wrap_angle(self.roll)))


@dataclass(frozen=True)
class PlanarTarget:
    """Planar 2-link IK query in the (x, y) plane."""

    x: float
    y: float
    L1: float
    L2: float
    branch: str = "elbow_up"  # "elbow_up" => sin(theta2) >= 0

    def __post_init__(self):
        if self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("link lengths must be > 0")
        if self.branch not in ("elbow_up", "elbow_down"):
            raise ValueError(f"unknown branch {self.branch!r}")


def planar_ik(target: PlanarTarget) -> tuple[float, float]:
    """Closed-form 2-link inverse kinematics.

    Solves cos(theta2) from the law of cosines, picks the branch sign for
    sin(theta2) (elbow_up => sin >= 0), and recovers both angles with
    two-argument arctangents. Raises ``Unreachable`` outside the annulus
    [|L1-L2|, L1+L2] and ``Degenerate`` at the origin when L1 == L2.
    """
    x, y, L1, L2 = target.x, target.y, target.L1, target.L2
    rr = x * x + y * y
    outer = (L1 + L2) ** 2
    inner = (L1 - L2) ** 2
    if rr > outer:
        raise Unreachable(f"target ({x:.4g}, {y:.4g}) outside reach {L1 + L2:.4g}")
    if rr < inner:
        raise Unreachable(f"target ({x:.4g}, {y:.4g}) inside inner annulus {abs(L1 - L2):.4g}")
    if rr == 0.0 and L1 == L2:
        raise Degenerate("origin target with equal links: theta1 is unconstrained")

    cos_t2 = (rr - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
    cos_t2 = min(1.0, max(-1.0, cos_t2))
    sin_t2 = math.sqrt(max(0.0, 1.0 - cos_t2 * cos_t2))
    if target.branch == "elbow_down":
        sin_t2 = -sin_t2
    theta2 = math.atan2(sin_t2, cos_t2)
    theta1 = math.atan2(y, x) - math.atan2(L2 * sin_t2, L1 + L2 * cos_t2)
    return float(wrap_angle(theta1)), float(wrap_angle(theta2))


def planar_fk(theta1: float, theta2: float, L1: float, L2: float) -> tuple[float, float]:
    """End point of the planar 2-link chain; the inverse of ``planar_ik``."""
    x = L1 * math.cos(theta1) + L2 * math.cos(theta1 + theta2)
    y = L1 * math.sin(theta1) + L2 * math.sin(theta1 + theta2)
    return x, y


def chain_points(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """World positions of the joint origins and the tool point, shape (6, 3).

    Row order: base, shoulder, elbow, wrist-pitch, wrist-roll, tool.
    """
    return chain_points_batch(arm, np.asarray(q, dtype=float)[None, :])[0]


def chain_points_batch(arm: ArmModel, Q: np.ndarray) -> np.ndarray:
    """Vectorised ``chain_points`` for an (N, 5) batch; returns (N, 6, 3)."""
    Q = np.asarray(Q, dtype=float)
    L1, L2, L3, L4, L5 = arm.link_lengths
    tip = L5 + arm.tool_offset
    c1, s1 = np.cos(Q[:, 0]), np.sin(Q[:, 0])
    p2 = Q[:, 1]
    p23 = p2 + Q[:, 2]
    p234 = p23 + Q[:, 3]

    n = Q.shape[0]
    pts = np.zeros((n, 6, 3))
    pts[:, 1, 2] = L1
    # radial/vertical offsets of each successive segment in the pitch plane
    r = L2 * np.cos(p2)
    z = L1 + L2 * np.sin(p2)
    pts[:, 2, 0] = r * c1
    pts[:, 2, 1] = r * s1
    pts[:, 2, 2] = z
    r = r + L3 * np.cos(p23)
    z = z + L3 * np.sin(p23)
    pts[:, 3, 0] = r * c1
    pts[:, 3, 1] = r * s1
    pts[:, 3, 2] = z
    cr, sr = np.cos(p234), np.sin(p234)
    r4 = r + L4 * cr
    z4 = z + L4 * sr
    pts[:, 4, 0] = r4 * c1
    pts[:, 4, 1] = r4 * s1
    pts[:, 4, 2] = z4
    rt = r4 + tip * cr
    zt = z4 + tip * sr
    pts[:, 5, 0] = rt * c1
    pts[:, 5, 1] = rt * s1
    pts[:, 5, 2] = zt
    return pts


def tool_positions_batch(arm: ArmModel, Q: np.ndarray) -> np.ndarray:
    """Tool points only for an (N, 5) batch; returns (N, 3)."""
    return chain_points_batch(arm, Q)[:, 5, :]


def forward_kinematics(arm: ArmModel, q: np.ndarray) -> Pose:
    """Tool pose for a joint vector. Joint limits are deliberately ignored."""
    q = as_joint_vector(q)
    pts = chain_points(arm, q)
    p234 = q[1] + q[2] + q[3]
    pitch = math.atan2(math.sin(p234), abs(math.cos(p234)))
    return Pose(position=pts[5], pitch=pitch, roll=float(wrap_angle(q[4])))


def tool_frame(arm: ArmModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tool point and tool rotation matrix (columns: axis, lateral, lateral)."""
    q = as_joint_vector(q)
    pts = chain_points(arm, q)
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    p234 = q[1] + q[2] + q[3]
    cp, sp = math.cos(p234), math.sin(p234)
    c5, s5 = math.cos(q[4]), math.sin(q[4])
    Rz = np.array([[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]])
    # pitch rotates about -y so that positive pitch raises the tool axis
    Ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, c5, -s5], [0.0, s5, c5]])
    return pts[5], Rz @ Ry @ Rx


def jacobian(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """5x5 task Jacobian; rows (xdot, ydot, zdot, pitch-rate, roll-rate)."""
    q = as_joint_vector(q)
    pts = chain_points(arm, q)
    tool = pts[5]
    J = np.zeros((5, 5))

    # base yaw: rotation about world z through the origin
    J[0, 0] = -tool[1]
    J[1, 0] = tool[0]

    # pitch joints: rotation about the yawed horizontal axis through p_j;
    # axis chosen so positive pitch raises the tool
    axis = np.array([math.sin(q[0]), -math.cos(q[0]), 0.0])
    for j, origin_row in ((1, 1), (2, 2), (3, 3)):
        J[:3, j] = np.cross(axis, tool - pts[origin_row])

    # wrist roll: tool point lies on the roll axis, so no linear part
    p234 = q[1] + q[2] + q[3]
    s = np.sign(math.cos(p234))  # elevation derivative; 0 at the vertical kink
    J[3, 1] = J[3, 2] = J[3, 3] = s
    J[4, 4] = 1.0
    return J


@dataclass(frozen=True)
class IKReport:
    """Outcome of an iterative IK solve."""

    converged: bool
    iterations: int
    pos_residual: float  # m
    ang_residual: float  # rad, max of |pitch error|, |roll error|


def _analytic_candidates(arm: ArmModel, target: Pose) -> list[np.ndarray]:
    """Exact-decomposition seed candidates for the iterative solver.

    The distal assembly (wrist-pitch link + roll link + tool extension) is
    rigid along the tool axis, so subtracting it from the target leaves a
    planar two-link problem for shoulder and elbow. Eight branch
    combinations exist: base bearing or its opposite, tool axis tilted
    forward or folded back over the arm, elbow up or down. Candidates whose
    planar sub-problem is unreachable are dropped; the rest are clamped to
    joint limits (exact when the unclamped solution already respects them).
    """
    L2, L3 = arm.joints[1].link_length, arm.joints[2].link_length
    distal = arm.joints[3].link_length + arm.joints[4].link_length + arm.tool_offset
    x, y, z = target.position
    r_t = math.hypot(x, y)
    yaw0 = math.atan2(y, x) if r_t > 1e-12 else 0.0
    z_t = z - arm.joints[0].link_length

    out: list[np.ndarray] = []
    for yaw, r_signed in ((yaw0, r_t), (wrap_angle(yaw0 + math.pi), -r_t)):
        for p234 in (target.pitch, wrap_angle(math.pi - target.pitch)):
            r_w = r_signed - distal * math.cos(p234)
            z_w = z_t - distal * math.sin(p234)
            for branch in ("elbow_up", "elbow_down"):
                try:
                    q2, q3 = planar_ik(PlanarTarget(r_w, z_w, L2, L3, branch))
                except (Unreachable, Degenerate):
                    continue
                q4 = float(wrap_angle(p234 - q2 - q3))
                cand = arm.clamp(np.array([yaw, q2, q3, q4, target.roll]))
                if not any(np.allclose(cand, c, atol=1e-9) for c in out):
                    out.append(cand)
    return out


def ik_solve(
    arm: ArmModel,
    target: Pose,
    seed: np.ndarray,
    *,
    tol_pos: float = 1e-4,
    tol_ang: float = 1e-3,
    max_iters: int = 200,
    damping: float = 0.05,
    max_step: float = 0.5,
) -> tuple[np.ndarray, IKReport]:
    """Damped least-squares IK on the full 5-DOF chain.

    Runs the update q <- clamp(q + J^T (J J^T + damping^2 I)^{-1} e) until
    the position residual is within ``tol_pos`` and the pitch/roll residuals
    within ``tol_ang``. Besides the caller's seed, analytic decomposition
    seeds for every branch combination are polished too, ordered by distance
    from the caller's seed so that of several valid arm postures the one
    nearest the current configuration wins; all attempts share the single
    ``max_iters`` iteration budget and the reported count is cumulative.

    The returned joint vector always respects joint limits. Non-convergence
    is reported via ``IKReport.converged`` rather than raised, so bulk
    callers can count failures cheaply.

    Raises ``Unreachable`` when the target position norm exceeds the total
    reach (fast pre-check) and ``ValueError`` when the seed violates limits.
    """
    q0 = as_joint_vector(seed)
    if not arm.within_limits(q0, tol=1e-12):
        raise ValueError("ik_solve seed must lie within joint limits")
    if float(np.linalg.norm(target.position)) > arm.total_reach:
        raise Unreachable(
            f"|target|={np.linalg.norm(target.position):.4g} m exceeds reach {arm.total_reach:.4g} m"
        )

    damping_sq = damping * damping
    eye = np.eye(5)

    def residual(q: np.ndarray) -> tuple[np.ndarray, float, float]:
        pose = forward_kinematics(arm, q)
        e = np.empty(5)
        e[:3] = target.position - pose.position
        e[3] = target.pitch - pose.pitch
        e[4] = wrap_angle(target.roll - pose.roll)
        return e, float(np.linalg.norm(e[:3])), float(max(abs(e[3]), abs(e[4])))

    best_q = q0.copy()
    best_pos = math.inf
    best_ang = math.inf
    spent = 0

    def polish(q: np.ndarray, budget: int) -> tuple[np.ndarray, bool]:
        nonlocal best_q, best_pos, best_ang, spent
        for _ in range(budget + 1):
            e, pos_res, ang_res = residual(q)
            if pos_res < best_pos or (pos_res == best_pos and ang_res < best_ang):
                best_q, best_pos, best_ang = q.copy(), pos_res, ang_res
            if pos_res <= tol_pos and ang_res <= tol_ang:
                return q, True
            if spent >= max_iters:
                return q, False
            spent += 1
            J = jacobian(arm, q)
            dq = J.T @ np.linalg.solve(J @ J.T + damping_sq * eye, e)
            step = float(np.max(np.abs(dq)))
            if step > max_step:
                dq *= max_step / step
            q = arm.clamp(q + dq)
        return q, False

    candidates = [q0] + _analytic_candidates(arm, target)
    candidates.sort(key=lambda c: float(np.linalg.norm(c - q0)))
    per_seed_cap = max(10, max_iters // 5)

    # Analytic candidates are closed-form: when one already meets tolerance
    # the solve is done without spending any iterations. Scan in distance
    # order so the posture nearest the caller's seed wins.
    for cand in candidates:
        _, pos_res, ang_res = residual(cand)
        if pos_res < best_pos or (pos_res == best_pos and ang_res < best_ang):
            best_q, best_pos, best_ang = cand.copy(), pos_res, ang_res
        if pos_res <= tol_pos and ang_res <= tol_ang:
            return cand, IKReport(True, 0, pos_res, ang_res)

    for cand in candidates:
        q, ok = polish(cand, min(per_seed_cap, max_iters - spent))
        if ok:
            return q, IKReport(True, spent, best_pos, best_ang)
        if spent >= max_iters:
            break

    if spent < max_iters:
        q, ok = polish(best_q.copy(), max_iters - spent)
        if ok:
            return q, IKReport(True, spent, best_pos, best_ang)

    return best_q, IKReport(False, spent, best_pos, best_ang)
