"""Acceptance gate: one test per top-level deliverable guarantee.

Every tolerance here is pinned; when one of these fails the package does not
meet its contract, whatever the unit suites say. Wall-clock limits are
generous desk-scale budgets, not performance assertions.
"""

import time

import numpy as np
import pytest

from armtwin.config import load_profile, load_scenario
from armtwin.emulator import electrical_load
from armtwin.errors import DecodeError
from armtwin.kinematics import (
    PlanarTarget,
    default_arm,
    forward_kinematics,
    ik_solve,
    jacobian,
    planar_fk,
    planar_ik,
)
from armtwin.sync import Channel, ChannelModel, JointStateMsg, decode, encode, reconcile, twin_initial
from armtwin.report import canonical_json
from armtwin.trials import (
    run_pipetting_trial,
    run_placement_trial,
    run_planning_benchmark,
    run_repeatability,
)


def test_planar_ik_round_trips_both_branches():
    rng = np.random.default_rng(12345)
    t0 = time.perf_counter()
    for _ in range(10_000):
        L1, L2 = rng.uniform(0.5, 2.0, size=2)
        a1, a2 = rng.uniform(-np.pi, np.pi, size=2)
        x, y = planar_fk(a1, a2, L1, L2)
        for branch in ("elbow_up", "elbow_down"):
            t1, t2 = planar_ik(PlanarTarget(x=x, y=y, L1=L1, L2=L2, branch=branch))
            xr, yr = planar_fk(t1, t2, L1, L2)
            assert abs(xr - x) <= 1e-9 * (L1 + L2)
            assert abs(yr - y) <= 1e-9 * (L1 + L2)
    assert time.perf_counter() - t0 < 1.0


def test_pose_ik_converges_within_limits():
    arm = default_arm()
    rng = np.random.default_rng(777)
    span = arm.upper_limits - arm.lower_limits
    t0 = time.perf_counter()
    converged = 0
    for _ in range(1000):
        q_true = arm.lower_limits + rng.uniform(0.02, 0.98, size=5) * span
        target = forward_kinematics(arm, q_true)
        seed = np.clip(
            q_true + rng.uniform(-0.3, 0.3, size=5), arm.lower_limits, arm.upper_limits
        )
        q, report = ik_solve(arm, target, seed=seed)
        assert arm.within_limits(q, tol=1e-9)  # never an out-of-range answer
        if report.converged and report.pos_residual <= 1e-4 and report.iterations <= 200:
            converged += 1
    assert converged >= 950
    assert time.perf_counter() - t0 < 10.0


def test_jacobian_matches_finite_differences():
    arm = default_arm()
    rng = np.random.default_rng(4242)
    span = arm.upper_limits - arm.lower_limits
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        q = arm.lower_limits + rng.uniform(0.05, 0.95, size=5) * span
        J = jacobian(arm, q)
        for j in range(5):
            dq = np.zeros(5)
            dq[j] = h
            plus = forward_kinematics(arm, q + dq).position
            minus = forward_kinematics(arm, q - dq).position
            fd = (plus - minus) / (2 * h)
            worst = max(worst, float(np.max(np.abs(J[:3, j] - fd))))
    assert worst <= 1e-6


def test_planners_clear_success_band_on_shipped_suite():
    t0 = time.perf_counter()
    report = run_planning_benchmark(load_scenario("planning_benchmark"))
    elapsed = time.perf_counter() - t0
    for method in ("rrt", "prm"):
        stats = report.planner[method]
        assert stats["plans"] == 500  # 5 scenes x 100 seeds
        assert 0.90 <= stats["success_rate"] <= 1.0, (
            f"{method} success {stats['success_rate']:.3f} outside [0.90, 1.0]"
        )
    # successful plans all carried dense revalidation and an executable trajectory
    for rec in report.plan_records:
        if rec.success:
            assert rec.waypoints >= 2 and rec.exec_duration_s > 0
    assert elapsed < 120.0, f"benchmark took {elapsed:.0f}s (budget 120s)"


def test_shipped_presets_reproduce_reference_metrics():
    placement = run_placement_trial(load_scenario("placement_improved")).aggregates
    assert abs(placement["pos_error_mm"]["mean"] - 2.2) <= 0.3
    assert abs(placement["ang_error_deg"]["mean"] - 2.5) <= 0.5

    pipetting = run_pipetting_trial(load_scenario("pipetting_improved"))
    assert pipetting.cycles == 100
    assert abs(pipetting.aggregates["abs_vol_error_ml"]["mean"] - 0.2) <= 0.05
    assert pipetting.success_rate >= 0.95
    assert abs(pipetting.aggregates["alignment_mm"]["mean"] - 1.6) <= 0.3

    repeat = run_repeatability(load_scenario("repeatability_improved"))
    assert repeat.cycles == 50
    assert repeat.aggregates["repeatability_mm"] <= 1.2

    original = run_placement_trial(load_scenario("placement_original")).aggregates
    assert abs(original["pos_error_mm"]["mean"] - 4.0) <= 0.5
    assert abs(original["ang_error_deg"]["mean"] - 8.5) <= 1.0
    assert abs(original["repeatability_mm"] - 2.8) <= 0.5

    pip_orig = run_pipetting_trial(load_scenario("pipetting_original")).aggregates
    assert abs(pip_orig["abs_vol_error_ml"]["mean"] - 0.4) <= 0.1


def test_power_draw_matches_rated_endpoints():
    improved = load_profile("improved").power
    assert electrical_load(False, 0.0, improved) == (0.200, pytest.approx(10.0))
    assert electrical_load(True, 1.0, improved) == (1.0, 50.0)
    original = load_profile("original").power
    assert electrical_load(False, 0.0, original) == (0.250, pytest.approx(12.5))
    assert electrical_load(True, 1.0, original) == (2.0, 100.0)


def test_twin_tracks_within_channel_bounds():
    # zero impairment: the twin replays the source exactly, bit for bit
    channel = Channel(ChannelModel())
    twin = twin_initial(np.zeros(5))
    source, estimate = [], []
    for k in range(1, 501):
        now = k * 0.01
        q = np.full(5, np.sin(now))
        msg = JointStateMsg(seq=k, timestamp=now, q=q, qdot=np.zeros(5))
        delivered = channel.step(now, [msg])
        twin = reconcile(twin, delivered, now, v_cap=0.0)
        source.append(q)
        estimate.append(twin.q_estimate)
    assert np.array_equal(np.asarray(source), np.asarray(estimate))

    # 50 ms constant latency on a 1 rad/s ramp, no extrapolation:
    # the estimate lags by exactly the channel delay
    channel = Channel(ChannelModel(latency_mean=0.05))
    twin = twin_initial(np.zeros(5))
    drift = 0.0
    for k in range(1, 301):
        now = k * 0.01
        q = np.full(5, 1.0 * now)
        msg = JointStateMsg(seq=k, timestamp=now, q=q, qdot=np.ones(5))
        delivered = channel.step(now, [msg])
        twin = reconcile(twin, delivered, now, v_cap=0.0)
        if now > 0.2:  # past the start-up transient
            drift = max(drift, float(np.max(np.abs(q - twin.q_estimate))))
    assert abs(drift - 0.05) <= 0.001

    # full runs are bit-reproducible per seed
    cfg = load_scenario("placement_improved")
    assert canonical_json(run_placement_trial(cfg)) == canonical_json(run_placement_trial(cfg))


def test_wire_codec_is_stable_and_tamper_evident():
    golden_hex = (
        "4a53012a00000000000000000000000000f43f9a9999999999b93f9a99999999"
        "99c9bf333333333333d33f9a9999999999d9bf000000000000e03f0000000000"
        "00f03f0000000000000000000000000000f0bf00000000000000400000000000"
        "0000c0856795b4"
    )
    msg = JointStateMsg(
        seq=42,
        timestamp=1.25,
        q=np.array([0.1, -0.2, 0.3, -0.4, 0.5]),
        qdot=np.array([1.0, 0.0, -1.0, 2.0, -2.0]),
    )
    frame = bytes.fromhex(golden_hex)
    assert encode(msg) == frame
    assert decode(frame) == msg
    with pytest.raises(DecodeError):
        decode(frame[:-1])
    corrupted = frame[:-1] + bytes([frame[-1] ^ 0xFF])
    with pytest.raises(DecodeError):
        decode(corrupted)
