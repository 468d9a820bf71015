"""Hardware-free digital twin of a 5-DOF teleoperated lab arm.

The package simulates the full remote-manipulation stack — kinematics,
sampling-based motion planning, servo/power emulation, lossy state
synchronization — and ships a trials harness that reproduces placement,
pipetting, repeatability and planner-benchmark metrics from calibrated
presets. ``armtwin.server`` exposes the live twin over a websocket for
operator consoles; ``armtwin.cli`` is the command-line frontend.
"""

from .config import (
    AimCalibration,
    EmulatorProfile,
    Scene,
    ScenarioConfig,
    list_scenarios,
    load_arm,
    load_channel,
    load_profile,
    load_scenario,
    load_scene,
    scene_suite,
)
from .emulator import (
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
from .errors import (
    ArmTwinError,
    ConfigError,
    DecodeError,
    Degenerate,
    InvalidEndpoint,
    IoError,
    MismatchedTraces,
    NoPathFound,
    OutOfReach,
    Overweight,
    ScenarioError,
    Unreachable,
)
from .kinematics import (
    ArmModel,
    IKReport,
    JointSpec,
    PlanarTarget,
    Pose,
    chain_points,
    default_arm,
    forward_kinematics,
    ik_solve,
    jacobian,
    planar_fk,
    planar_ik,
    ready_q,
    tool_frame,
)
from .planning import (
    Box,
    PlannerParams,
    Sphere,
    Trajectory,
    World,
    min_clearance,
    path_valid,
    plan,
    plan_prm,
    plan_rrt,
    shortcut_path,
    time_parameterize,
)
from .report import (
    canonical_json,
    emit_report,
    load_report,
    render_figures,
    report_csv,
    report_from_dict,
    report_to_dict,
)
from .sync import (
    Channel,
    ChannelModel,
    DriftReport,
    JointStateMsg,
    Trace,
    TwinState,
    decode,
    drift_report,
    encode,
    reconcile,
    twin_initial,
)
from .trials import (
    CycleRecord,
    PlanRecord,
    TrialReport,
    run,
    run_pipetting_trial,
    run_placement_trial,
    run_planning_benchmark,
    run_repeatability,
)

__version__ = "0.1.0"
