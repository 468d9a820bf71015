"""Emulator tests.

Oracles: servo tracking against the closed-form first-order response,
grasp reach against a plain Euclidean distance check, pipette bias against
the linear model evaluated by hand.
"""

import math

import numpy as np
import pytest

from armtwin.emulator import (
    FLAG_LIMIT_CLAMPED,
    FLAG_STALLED,
    ArmState,
    LabObject,
    PipetteProfile,
    PowerProfile,
    ServoProfile,
    electrical_load,
    grasp,
    initial_state,
    pipette_dispense,
    release,
    step,
)
from armtwin.errors import OutOfReach, Overweight
from armtwin.kinematics import default_arm, forward_kinematics, ready_q

ARM = default_arm()

QUIET = ServoProfile(noise_std=0.0, resolution=0.0)
IMPROVED_POWER = PowerProfile(idle_current=0.200, load_current=1.0, rated_power=50.0, label="improved")
ORIGINAL_POWER = PowerProfile(idle_current=0.250, load_current=2.0, rated_power=100.0, label="original")
IMPROVED_PIPETTE = PipetteProfile(bias_per_m=125.0, noise_std=0.05, label="improved")


class TestServoStep:
    def test_fixed_point(self):
        s0 = initial_state(ARM, ready_q())
        s1 = step(ARM, s0, s0.q_actual, 0.01, QUIET, rng=0)
        np.testing.assert_array_equal(s1.q_actual, s0.q_actual)
        np.testing.assert_array_equal(s1.q_measured, s0.q_actual)
        np.testing.assert_array_equal(s1.qdot, np.zeros(5))

    def test_exponential_decay_matches_closed_form(self):
        # small error so the velocity cap cannot bind
        s0 = initial_state(ARM, ready_q())
        cmd = s0.q_actual + 0.01
        dt, tau = 0.01, 0.08
        s1 = step(ARM, s0, cmd, dt, ServoProfile(time_constant=tau, noise_std=0.0, resolution=0.0), rng=0)
        expected_error = 0.01 * math.exp(-dt / tau)
        np.testing.assert_allclose(cmd - s1.q_actual, expected_error, atol=1e-9)

    def test_velocity_cap_binds_on_large_error(self):
        s0 = initial_state(ARM, np.zeros(5))
        cmd = np.full(5, 1.0)
        dt = 0.01
        s1 = step(ARM, s0, cmd, dt, QUIET, rng=0)
        np.testing.assert_allclose(s1.q_actual, ARM.max_velocities * dt, atol=1e-12)
        np.testing.assert_allclose(s1.qdot, ARM.max_velocities, atol=1e-9)

    def test_command_beyond_limits_clamped_and_flagged(self):
        s0 = initial_state(ARM, np.zeros(5))
        cmd = np.array([10.0, 0, 0, 0, 0])
        s1 = step(ARM, s0, cmd, 0.01, QUIET, rng=0)
        assert FLAG_LIMIT_CLAMPED in s1.flags
        assert s1.q_commanded[0] == pytest.approx(ARM.upper_limits[0])
        s2 = step(ARM, s1, np.zeros(5), 0.01, QUIET, rng=0)
        assert FLAG_LIMIT_CLAMPED not in s2.flags

    def test_limits_never_exceeded(self):
        rng = np.random.default_rng(40)
        s = initial_state(ARM, np.zeros(5))
        for _ in range(200):
            cmd = rng.uniform(-6, 6, size=5)
            s = step(ARM, s, cmd, 0.05, QUIET, rng=rng)
            assert ARM.within_limits(s.q_actual)

    def test_deterministic_per_seed(self):
        s0 = initial_state(ARM, ready_q())
        noisy = ServoProfile(noise_std=1e-3)
        a = step(ARM, s0, ready_q() + 0.1, 0.01, noisy, rng=123)
        b = step(ARM, s0, ready_q() + 0.1, 0.01, noisy, rng=123)
        np.testing.assert_array_equal(a.q_actual, b.q_actual)
        np.testing.assert_array_equal(a.q_measured, b.q_measured)

    def test_rng_stream_alignment_across_noise_settings(self):
        # the noise draw happens even at noise_std 0 so that downstream
        # consumers of a shared stream see identical sequences
        s0 = initial_state(ARM, ready_q())
        r1 = np.random.default_rng(7)
        r2 = np.random.default_rng(7)
        step(ARM, s0, ready_q() + 0.1, 0.01, ServoProfile(noise_std=0.0), rng=r1)
        step(ARM, s0, ready_q() + 0.1, 0.01, ServoProfile(noise_std=1e-3), rng=r2)
        assert r1.random() == r2.random()

    def test_quantization(self):
        s0 = initial_state(ARM, ready_q())
        profile = ServoProfile(noise_std=0.0, resolution=0.01)
        s1 = step(ARM, s0, ready_q() + 0.0234, 0.5, profile, rng=0)
        counts = s1.q_measured / 0.01
        np.testing.assert_allclose(counts, np.round(counts), atol=1e-9)

    def test_noise_perturbs_measurement_not_actual(self):
        s0 = initial_state(ARM, ready_q())
        profile = ServoProfile(noise_std=1e-3, resolution=0.0)
        s1 = step(ARM, s0, s0.q_actual, 0.01, profile, rng=1)
        np.testing.assert_array_equal(s1.q_actual, s0.q_actual)
        assert np.any(s1.q_measured != s1.q_actual)

    def test_tiny_time_constant_converges_geometrically(self):
        s = initial_state(ARM, np.zeros(5))
        cmd = ready_q()
        profile = ServoProfile(time_constant=1e-6, noise_std=0.0, resolution=0.0)
        errors = []
        for _ in range(60):
            s = step(ARM, s, cmd, 0.02, profile, rng=0)
            errors.append(float(np.max(np.abs(cmd - s.q_actual))))
        assert errors[-1] == pytest.approx(0.0, abs=1e-12)
        # strictly decreasing until it hits zero
        positive = [e for e in errors if e > 0]
        assert all(a > b for a, b in zip(positive, positive[1:]))

    def test_stall_freezes_motion(self):
        s0 = initial_state(ARM, np.zeros(5))
        heavy = ArmState(
            q_actual=s0.q_actual,
            q_commanded=s0.q_commanded,
            q_measured=s0.q_measured,
            qdot=s0.qdot,
            payload=10.0,
            grasped="anvil",
        )
        s1 = step(ARM, heavy, ready_q(), 0.01, QUIET, rng=0)
        assert FLAG_STALLED in s1.flags
        np.testing.assert_array_equal(s1.q_actual, heavy.q_actual)
        np.testing.assert_array_equal(s1.qdot, np.zeros(5))

    def test_bad_dt_rejected(self):
        s0 = initial_state(ARM, ready_q())
        with pytest.raises(ValueError):
            step(ARM, s0, ready_q(), 0.0, QUIET, rng=0)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            ServoProfile(time_constant=0.0)
        with pytest.raises(ValueError):
            ServoProfile(noise_std=-1e-3)
        with pytest.raises(ValueError):
            ServoProfile(max_torque=0.0)


class TestElectricalLoad:
    def test_improved_idle(self):
        current, power = electrical_load(False, 0.0, IMPROVED_POWER)
        assert current == pytest.approx(0.200)
        assert power == pytest.approx(10.0)

    def test_improved_heavy_load(self):
        current, power = electrical_load(True, 1.0, IMPROVED_POWER)
        assert current == pytest.approx(1.0)
        assert power == pytest.approx(50.0)

    def test_original_endpoints(self):
        assert electrical_load(False, 0.0, ORIGINAL_POWER) == (
            pytest.approx(0.250),
            pytest.approx(12.5),
        )
        assert electrical_load(True, 1.0, ORIGINAL_POWER) == (
            pytest.approx(2.0),
            pytest.approx(100.0),
        )

    def test_idle_ignores_payload(self):
        current, _ = electrical_load(False, 0.9, IMPROVED_POWER)
        assert current == pytest.approx(0.200)

    def test_monotone_in_payload_fraction(self):
        fracs = np.linspace(0, 1, 11)
        currents = [electrical_load(True, float(f), ORIGINAL_POWER)[0] for f in fracs]
        assert all(a <= b for a, b in zip(currents, currents[1:]))
        assert all(c >= ORIGINAL_POWER.idle_current for c in currents)

    def test_fraction_out_of_range(self):
        with pytest.raises(ValueError):
            electrical_load(True, 1.2, IMPROVED_POWER)
        with pytest.raises(ValueError):
            electrical_load(True, -0.1, IMPROVED_POWER)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            PowerProfile(idle_current=2.0, load_current=1.0, rated_power=50.0, label="x")
        with pytest.raises(ValueError):
            PowerProfile(idle_current=0.0, load_current=1.0, rated_power=50.0, label="x")


class TestGrasp:
    def state(self):
        return initial_state(ARM, ready_q())

    def tool_pos(self, state):
        return forward_kinematics(ARM, state.q_actual).position

    def test_vial_at_tool_point(self):
        s = self.state()
        vial = LabObject("vial-1", 0.010, self.tool_pos(s))
        s2 = grasp(ARM, s, vial)
        assert s2.grasped == "vial-1"
        assert s2.payload == pytest.approx(0.010)

    def test_overweight(self):
        s = self.state()
        with pytest.raises(Overweight):
            grasp(ARM, s, LabObject("brick", 0.025, self.tool_pos(s)))

    def test_out_of_reach(self):
        s = self.state()
        away = self.tool_pos(s) + np.array([0.007, 0.0, 0.0])  # 5 mm past the 2 mm tol
        with pytest.raises(OutOfReach):
            grasp(ARM, s, LabObject("vial-2", 0.010, away), reach_tol=0.002)

    def test_within_custom_tolerance(self):
        s = self.state()
        near = self.tool_pos(s) + np.array([0.0, 0.004, 0.0])
        s2 = grasp(ARM, s, LabObject("vial-3", 0.005, near), reach_tol=0.005)
        assert s2.grasped == "vial-3"

    def test_wrong_tool(self):
        s = initial_state(ARM, ready_q(), tool="pipette")
        with pytest.raises(ValueError):
            grasp(ARM, s, LabObject("vial", 0.01, self.tool_pos(s)))

    def test_double_grasp_rejected(self):
        s = self.state()
        vial = LabObject("vial-1", 0.010, self.tool_pos(s))
        s2 = grasp(ARM, s, vial)
        with pytest.raises(ValueError):
            grasp(ARM, s2, vial)

    def test_release(self):
        s = self.state()
        s2 = grasp(ARM, s, LabObject("vial-1", 0.010, self.tool_pos(s)))
        s3 = release(s2)
        assert s3.grasped is None
        assert s3.payload == 0.0


class TestPipette:
    def state(self):
        return initial_state(ARM, ready_q(), tool="pipette")

    def test_zero_command_zero_noise(self):
        quiet = PipetteProfile(bias_per_m=125.0, noise_std=0.0, label="quiet")
        assert pipette_dispense(self.state(), 0.0, 0.0, quiet, rng=0) == 0.0

    def test_bias_linear_in_alignment(self):
        quiet = PipetteProfile(bias_per_m=125.0, noise_std=0.0, label="quiet")
        s = self.state()
        d1 = pipette_dispense(s, 1.0, 0.001, quiet, rng=0) - 1.0
        d2 = pipette_dispense(s, 1.0, 0.002, quiet, rng=0) - 1.0
        assert d1 == pytest.approx(0.125)
        assert d2 == pytest.approx(2 * d1)

    def test_improved_config_statistics(self):
        # representative alignment error of the calibrated system
        s = self.state()
        rng = np.random.default_rng(55)
        devs = np.array(
            [pipette_dispense(s, 1.0, 0.0016, IMPROVED_PIPETTE, rng=rng) - 1.0 for _ in range(1000)]
        )
        mean_abs = float(np.mean(np.abs(devs)))
        assert 0.15 <= mean_abs <= 0.25
        assert float(np.mean(np.abs(devs) <= 0.3)) >= 0.95

    def test_deterministic_per_seed(self):
        s = self.state()
        a = pipette_dispense(s, 1.0, 0.002, IMPROVED_PIPETTE, rng=42)
        b = pipette_dispense(s, 1.0, 0.002, IMPROVED_PIPETTE, rng=42)
        assert a == b

    def test_preconditions(self):
        gripper_state = initial_state(ARM, ready_q(), tool="gripper")
        with pytest.raises(ValueError):
            pipette_dispense(gripper_state, 1.0, 0.0, IMPROVED_PIPETTE, rng=0)
        with pytest.raises(ValueError):
            pipette_dispense(self.state(), -1.0, 0.0, IMPROVED_PIPETTE, rng=0)
        with pytest.raises(ValueError):
            pipette_dispense(self.state(), 1.0, -0.1, IMPROVED_PIPETTE, rng=0)
