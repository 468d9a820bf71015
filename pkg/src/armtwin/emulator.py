"""Software stand-in for the physical arm.

Servo tracking is a per-joint first-order lag (exact exponential update)
with a hard velocity cap; encoders report the true position corrupted by
seeded Gaussian noise and quantized to the encoder resolution. Electrical
draw interpolates between the measured idle and heavy-load endpoints of the
power profile. Tool actions cover a gripper (mass and reach checked) and a
pipette whose dispense error is linear in lateral alignment error plus
seeded noise.

``ArmState`` is an immutable value: ``step`` and the tool actions return new
states, so independent emulators (e.g. Monte Carlo batches) can run
concurrently, each with its own rng stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OutOfReach, Overweight
from .kinematics import ArmModel, as_joint_vector, chain_points

GRAVITY = 9.80665  # m/s^2

TOOLS = ("gripper", "pipette")

FLAG_LIMIT_CLAMPED = "limit_clamped"
FLAG_STALLED = "stalled"


@dataclass(frozen=True)
class ServoProfile:
    """Joint servo behaviour: response lag, encoder granularity, torque."""

    time_constant: float = 0.08  # s
    resolution: float = 0.0015  # rad per encoder count; 0 disables quantization
    noise_std: float = 0.0  # rad
    max_torque: float = 7.85  # N*m, holding torque at the shoulder

    def __post_init__(self):
        if self.time_constant <= 0:
            raise ValueError("time_constant must be > 0")
        if self.resolution < 0 or self.noise_std < 0:
            raise ValueError("resolution and noise_std must be >= 0")
        if self.max_torque <= 0:
            raise ValueError("max_torque must be > 0")


@dataclass(frozen=True)
class PowerProfile:
    """Electrical endpoints: idle draw and heavy-load draw at rated power."""

    idle_current: float  # A
    load_current: float  # A
    rated_power: float  # W
    label: str

    def __post_init__(self):
        if not 0 < self.idle_current <= self.load_current:
            raise ValueError("currents must satisfy load_current >= idle_current > 0")
        if self.rated_power <= 0:
            raise ValueError("rated_power must be > 0")


@dataclass(frozen=True)
class PipetteProfile:
    """Dispense error model: bias linear in alignment error, plus noise."""

    bias_per_m: float  # mL of bias per meter of lateral alignment error
    noise_std: float  # mL
    label: str

    def __post_init__(self):
        if self.bias_per_m < 0 or self.noise_std < 0:
            raise ValueError("bias_per_m and noise_std must be >= 0")


@dataclass(frozen=True)
class LabObject:
    """Something the gripper can pick up."""

    id: str
    mass: float  # kg
    position: np.ndarray  # (3,)

    def __post_init__(self):
        pos = np.array(self.position, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError("position must be a finite 3-vector")
        if self.mass < 0:
            raise ValueError("mass must be >= 0")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class ArmState:
    """Instantaneous emulator state. Immutable; operations return new values.

    ``q_actual`` stays within joint limits by construction of ``step``.
    ``q_measured`` is what the encoders report (noisy, quantized) and is the
    only joint feedback controllers should trust; ``qdot`` is the realized
    joint velocity over the last step.
    """

    q_actual: np.ndarray
    q_commanded: np.ndarray
    q_measured: np.ndarray
    qdot: np.ndarray
    payload: float = 0.0  # kg
    tool: str = "gripper"
    grasped: str | None = None
    flags: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("q_actual", "q_commanded", "q_measured", "qdot"):
            object.__setattr__(self, name, as_joint_vector(getattr(self, name)))
        if self.payload < 0:
            raise ValueError("payload must be >= 0")
        if self.tool not in TOOLS:
            raise ValueError(f"tool must be one of {TOOLS}")
        object.__setattr__(self, "flags", frozenset(self.flags))


def initial_state(arm: ArmModel, q0: np.ndarray, tool: str = "gripper") -> ArmState:
    q0 = arm.clamp(as_joint_vector(q0))
    return ArmState(
        q_actual=q0, q_commanded=q0.copy(), q_measured=q0.copy(), qdot=np.zeros(5), tool=tool
    )


def _quantize(values: np.ndarray, resolution: float) -> np.ndarray:
    if resolution <= 0:
        return values
    return np.round(values / resolution) * resolution


def _shoulder_torque(arm: ArmModel, state: ArmState) -> float:
    tool_pos = chain_points(arm, state.q_actual)[5]
    return state.payload * GRAVITY * math.hypot(tool_pos[0], tool_pos[1])


def step(
    arm: ArmModel,
    state: ArmState,
    command: np.ndarray,
    dt: float,
    profile: ServoProfile,
    rng: np.random.Generator | int,
) -> ArmState:
    """Advance the servos by ``dt`` toward ``command``.

    Commands are clamped to joint limits (setting the ``limit_clamped``
    flag). Each joint follows the exact first-order decay
    error_after = error * exp(-dt / time_constant), additionally capped at
    the joint's velocity limit. When the held payload's gravity torque
    exceeds the servo torque the arm stalls in place. Encoder readings are
    the new position plus seeded Gaussian noise, quantized to resolution;
    one noise vector is drawn every step regardless of noise_std so rng
    streams stay aligned across profiles.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    rng = np.random.default_rng(rng)
    command = as_joint_vector(command)
    clamped = arm.clamp(command)
    flags = set()
    if not np.array_equal(clamped, command):
        flags.add(FLAG_LIMIT_CLAMPED)

    stalled = state.payload > 0 and _shoulder_torque(arm, state) > profile.max_torque
    if stalled:
        flags.add(FLAG_STALLED)
        q_new = state.q_actual.copy()
        qdot = np.zeros(5)
    else:
        alpha = 1.0 - math.exp(-dt / profile.time_constant)
        delta = (clamped - state.q_actual) * alpha
        cap = arm.max_velocities * dt
        delta = np.clip(delta, -cap, cap)
        q_new = arm.clamp(state.q_actual + delta)
        qdot = (q_new - state.q_actual) / dt

    noise = rng.normal(0.0, 1.0, size=5) * profile.noise_std
    measured = _quantize(q_new + noise, profile.resolution)

    return replace(
        state,
        q_actual=q_new,
        q_commanded=clamped,
        q_measured=measured,
        qdot=qdot,
        flags=frozenset(flags),
    )


def electrical_load(
    moving: bool, payload_fraction: float, profile: PowerProfile
) -> tuple[float, float]:
    """Current draw and power at the given motion/load point.

    Idle current when parked; otherwise a linear ramp from idle to the
    heavy-load current with ``payload_fraction``. Power scales so that the
    heavy-load current maps exactly to the rated power.
    """
    if not 0.0 <= payload_fraction <= 1.0:
        raise ValueError("payload_fraction must lie in [0, 1]")
    if moving:
        current = profile.idle_current + (
            profile.load_current - profile.idle_current
        ) * payload_fraction
    else:
        current = profile.idle_current
    power = profile.rated_power * current / profile.load_current
    return current, power


def grasp(
    arm: ArmModel,
    state: ArmState,
    obj: LabObject,
    max_payload: float = 0.020,
    reach_tol: float = 0.002,
) -> ArmState:
    """Pick up ``obj`` with the gripper.

    Fails with ``Overweight`` above ``max_payload`` and ``OutOfReach`` when
    the tool point is farther than ``reach_tol`` from the object.
    """
    if state.tool != "gripper":
        raise ValueError("grasp requires the gripper tool")
    if state.grasped is not None:
        raise ValueError(f"already holding {state.grasped!r}")
    if obj.mass > max_payload:
        raise Overweight(f"{obj.id}: {obj.mass * 1e3:.0f} g exceeds {max_payload * 1e3:.0f} g limit")
    tool_pos = chain_points(arm, state.q_actual)[5]
    dist = float(np.linalg.norm(tool_pos - obj.position))
    if dist > reach_tol:
        raise OutOfReach(f"{obj.id}: {dist * 1e3:.2f} mm from tool, tolerance {reach_tol * 1e3:.2f} mm")
    return replace(state, grasped=obj.id, payload=state.payload + obj.mass)


def release(state: ArmState) -> ArmState:
    """Open the gripper: drops the held object and its payload."""
    return replace(state, grasped=None, payload=0.0)


def pipette_dispense(
    state: ArmState,
    commanded_volume: float,
    alignment_error: float,
    noise_cfg: PipetteProfile,
    rng: np.random.Generator | int,
) -> float:
    """Dispensed volume for a commanded volume at a given alignment error.

    actual = commanded + bias_per_m * alignment_error + N(0, noise_std);
    deliberately unclamped so the bias model stays exactly linear.
    """
    if state.tool != "pipette":
        raise ValueError("pipette_dispense requires the pipette tool")
    if commanded_volume < 0:
        raise ValueError("commanded_volume must be >= 0")
    if alignment_error < 0:
        raise ValueError("alignment_error must be >= 0")
    rng = np.random.default_rng(rng)
    noise = float(rng.normal(0.0, 1.0)) * noise_cfg.noise_std
    return commanded_volume + noise_cfg.bias_per_m * alignment_error + noise
