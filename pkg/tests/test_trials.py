"""Scenario runner: determinism, aggregate consistency, shipped-preset metrics."""

import math
from dataclasses import replace

import numpy as np
import pytest

from armtwin.config import Scene, load_channel, load_scenario
from armtwin.errors import ScenarioError
from armtwin.planning import World
from armtwin.trials import (
    TrialReport,
    run,
    run_pipetting_trial,
    run_placement_trial,
    run_planning_benchmark,
    run_repeatability,
)


@pytest.fixture(scope="module")
def reports():
    """Each shipped scenario executed once, shared across tests."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run(load_scenario(name))
        return cache[name]

    return get


def quiet_cfg(name, **overrides):
    cfg = load_scenario(name, **overrides)
    return replace(cfg, profile=cfg.profile.quiet())


# --------------------------------------------------------------------------
# noise-free behaviour
# --------------------------------------------------------------------------


def test_noise_off_placement_is_sub_tenth_mm():
    rep = run_placement_trial(quiet_cfg("placement_improved", cycles=3))
    assert rep.success_rate == 1.0
    for r in rep.records:
        assert r.pos_error_mm < 0.1  # encoder quantization only


def test_noise_off_cycles_are_identical():
    rep = run_placement_trial(quiet_cfg("placement_improved", cycles=3))
    first = rep.records[0]
    for r in rep.records[1:]:
        assert r.achieved == first.achieved
        assert r.pos_error_mm == first.pos_error_mm
        assert r.ang_error_deg == first.ang_error_deg


def test_noise_off_pipetting_deviation_is_zero():
    rep = run_pipetting_trial(quiet_cfg("pipetting_improved", cycles=3))
    assert rep.success_rate == 1.0
    for r in rep.records:
        assert r.vol_error_ml == 0.0
        assert r.alignment_mm < 0.1


def test_noise_off_repeatability_series_is_flat():
    rep = run_repeatability(quiet_cfg("repeatability_improved", cycles=5))
    assert rep.series is not None and len(rep.series) == 5
    assert max(rep.series) < 1e-6
    assert rep.aggregates["band_violations"] == 0


# --------------------------------------------------------------------------
# determinism and dispatch
# --------------------------------------------------------------------------


def test_same_seed_same_report():
    cfg = load_scenario("pipetting_improved", cycles=5)
    assert run_pipetting_trial(cfg) == run_pipetting_trial(cfg)


def test_dispatcher_matches_direct_runner():
    cfg = load_scenario("placement_improved", cycles=2)
    assert run(cfg) == run_placement_trial(cfg)


def test_runner_rejects_wrong_task():
    cfg = load_scenario("pipetting_improved", cycles=1)
    with pytest.raises(ScenarioError):
        run_placement_trial(cfg)


def test_report_echoes_scenario():
    cfg = load_scenario("placement_improved", cycles=2)
    rep = run(cfg)
    assert rep.task == "placement"
    assert rep.profile == "improved"
    assert rep.channel == "lan"
    assert rep.cycles == 2
    assert rep.rng_seed == cfg.rng_seed
    assert len(rep.records) == 2
    assert rep.series is None
    assert rep.host["wall_s"] > 0.0


# --------------------------------------------------------------------------
# failure handling
# --------------------------------------------------------------------------


def test_unreachable_target_records_failed_cycles():
    cfg = load_scenario(
        "placement_improved",
        cycles=3,
        targets={
            "pick": [0.24, -0.12, 0.035],
            "place": [0.90, 0.0, 0.05],  # beyond reach
            "pitch": -math.pi / 2,
            "roll": 0.0,
        },
    )
    rep = run_placement_trial(cfg)
    assert rep.success_rate == 0.0
    assert len(rep.records) == 3
    for r in rep.records:
        assert not r.success
        assert r.achieved is None
        assert r.note
    assert rep.aggregates["pos_error_mm"]["count"] == 0
    assert rep.aggregates["repeatability_mm"] is None


def test_static_offset_compensates_systematic_bias():
    base = load_scenario("placement_improved", cycles=5)
    bias = base.profile.aim.pos_bias
    shifted = load_scenario(
        "placement_improved",
        cycles=5,
        targets={
            "pick": [0.24, -0.12, 0.035],
            "place": [0.24, 0.12, 0.035],
            "pitch": -math.pi / 2,
            "roll": 0.0,
            "offset": [-bias[0], -bias[1], -bias[2]],
        },
    )
    plain = run_placement_trial(base).aggregates["pos_error_mm"]["mean"]
    fixed = run_placement_trial(shifted).aggregates["pos_error_mm"]["mean"]
    assert fixed < 1.0
    assert fixed < plain / 2


def test_malformed_offset_rejected():
    cfg = load_scenario(
        "pipetting_improved",
        cycles=1,
        targets={"well": [0.26, 0.0, 0.06], "offset": [1.0, 2.0]},
    )
    with pytest.raises(ScenarioError):
        run_pipetting_trial(cfg)


# --------------------------------------------------------------------------
# aggregate consistency
# --------------------------------------------------------------------------


def test_aggregates_recomputable_from_records(reports):
    rep = reports("placement_improved")
    ok = [r for r in rep.records if r.success]
    pos = np.array([r.pos_error_mm for r in ok])
    agg = rep.aggregates["pos_error_mm"]
    assert agg["count"] == len(ok)
    assert agg["mean"] == pytest.approx(pos.mean(), abs=1e-12)
    assert agg["std"] == pytest.approx(pos.std(), abs=1e-12)
    assert agg["min"] == pos.min() and agg["max"] == pos.max()
    assert rep.aggregates["success_rate"] == rep.success_rate


def test_repeatability_series_matches_records(reports):
    rep = reports("repeatability_improved")
    achieved = np.array([r.achieved for r in rep.records if r.success])
    dev = np.linalg.norm(achieved - achieved.mean(axis=0), axis=1) * 1e3
    assert rep.series == pytest.approx(dev)
    assert rep.aggregates["repeatability_mm"] == max(rep.series)
    assert rep.aggregates["band_violations"] == sum(
        1 for d in rep.series if d > rep.aggregates["band_mm"]
    )


def test_energy_accounts_every_tick(reports):
    rep = reports("placement_improved")
    total = sum(r.cycle_time_s for r in rep.records)
    assert rep.energy["sim_time_s"] == pytest.approx(total, abs=1e-9)
    assert 0.0 < rep.energy["moving_fraction"] < 1.0


# --------------------------------------------------------------------------
# shipped-preset metrics
# --------------------------------------------------------------------------


def test_placement_improved_metrics(reports):
    agg = reports("placement_improved").aggregates
    assert reports("placement_improved").success_rate == 1.0
    assert 1.9 <= agg["pos_error_mm"]["mean"] <= 2.5
    assert 2.0 <= agg["ang_error_deg"]["mean"] <= 3.0
    assert 4.0 <= agg["cycle_time_s"]["mean"] <= 5.0


def test_placement_original_metrics(reports):
    agg = reports("placement_original").aggregates
    assert 3.5 <= agg["pos_error_mm"]["mean"] <= 4.5
    assert 7.5 <= agg["ang_error_deg"]["mean"] <= 9.5
    assert 2.3 <= agg["repeatability_mm"] <= 3.3


def test_pipetting_improved_metrics(reports):
    rep = reports("pipetting_improved")
    agg = rep.aggregates
    assert rep.success_rate >= 0.95
    assert 0.15 <= agg["abs_vol_error_ml"]["mean"] <= 0.25
    assert 1.3 <= agg["alignment_mm"]["mean"] <= 1.9


def test_pipetting_original_metrics(reports):
    agg = reports("pipetting_original").aggregates
    assert 0.3 <= agg["abs_vol_error_ml"]["mean"] <= 0.5
    assert 2.1 <= agg["alignment_mm"]["mean"] <= 2.7


def test_repeatability_improved_stays_in_band(reports):
    rep = reports("repeatability_improved")
    assert rep.cycles == 50 and rep.success_rate == 1.0
    assert rep.aggregates["repeatability_mm"] <= 1.2
    assert rep.aggregates["band_violations"] == 0


def test_improved_profile_beats_original(reports):
    imp = reports("placement_improved").aggregates
    orig = reports("placement_original").aggregates
    assert imp["pos_error_mm"]["mean"] < orig["pos_error_mm"]["mean"]
    assert imp["ang_error_deg"]["mean"] < orig["ang_error_deg"]["mean"]
    assert imp["repeatability_mm"] < orig["repeatability_mm"]


def test_energy_presets_diverge(reports):
    imp = reports("placement_improved").energy
    orig = reports("placement_original").energy
    assert 0.200 <= imp["mean_current_a"] <= 1.0
    assert 0.250 <= orig["mean_current_a"] <= 2.0
    assert imp["mean_current_a"] < orig["mean_current_a"]
    assert imp["mean_power_w"] < orig["mean_power_w"]


# --------------------------------------------------------------------------
# channel sensitivity
# --------------------------------------------------------------------------


def test_impaired_channel_raises_drift_not_failures():
    base = load_scenario("placement_improved", cycles=2)
    worse = load_scenario("placement_improved", cycles=2, channel="impaired")
    rep_lan = run_placement_trial(base)
    rep_bad = run_placement_trial(worse)
    assert rep_bad.success_rate == 1.0
    lan_drift = rep_lan.aggregates["max_drift_rad"]["max"]
    bad_drift = rep_bad.aggregates["max_drift_rad"]["max"]
    assert bad_drift > lan_drift
    assert bad_drift < 0.35  # bounded by v_cap x (latency + publish gap)


# --------------------------------------------------------------------------
# planning benchmark
# --------------------------------------------------------------------------


def test_benchmark_empty_world_is_perfect():
    cfg = load_scenario(
        "planning_benchmark",
        benchmark={"seeds": 4, "planners": ["rrt", "prm"]},
    )
    scene = Scene(
        name="free_space",
        world=World(),
        start_q=[-0.8, 0.5, -0.9, 0.4, 0.0],
        goal_q=[0.8, 0.5, -0.9, 0.4, 0.0],
    )
    rep = run_planning_benchmark(cfg, scenes=(scene,))
    assert rep.aggregates["success_rate"] == 1.0
    assert len(rep.plan_records) == 8
    for method in ("rrt", "prm"):
        stats = rep.planner[method]
        assert stats["plans"] == 4
        assert stats["success_rate"] == 1.0
        assert stats["exec_duration_s"]["mean"] > 0.0
        assert f"plan_time_{method}_mean_s" in rep.host
        assert f"plan_time_{method}_p95_s" in rep.host
    assert rep.planner["per_scene"]["free_space"] == {"rrt": 1.0, "prm": 1.0}


def test_benchmark_subset_of_shipped_scenes():
    cfg = load_scenario(
        "planning_benchmark",
        benchmark={
            "scenes": ["open_bench", "twin_spheres"],
            "seeds": 2,
            "planners": ["rrt", "prm"],
        },
    )
    rep = run_planning_benchmark(cfg)
    assert rep.aggregates["scenes"] == 2
    assert rep.aggregates["seeds"] == 2
    assert rep.aggregates["success_rate"] == 1.0
    for r in rep.plan_records:
        assert r.scene in ("open_bench", "twin_spheres")
        assert r.waypoints >= 2


def test_benchmark_unknown_scene_rejected():
    cfg = load_scenario("planning_benchmark", benchmark={"scenes": ["nowhere"]})
    with pytest.raises(ScenarioError):
        run_planning_benchmark(cfg)


def test_benchmark_requires_matching_task():
    cfg = load_scenario("placement_improved")
    with pytest.raises(ScenarioError):
        run_planning_benchmark(cfg)
