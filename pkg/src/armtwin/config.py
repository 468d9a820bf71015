"""Packaged presets and TOML loaders.

Everything tunable ships as data: the arm description, the two emulator
calibration presets ("original", "improved"), channel impairment presets,
planning benchmark scenes, and complete scenario files. Loaders accept
either a preset name or a filesystem path and return the validated domain
objects of the other modules. All files carry ``format = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:  # 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .emulator import PipetteProfile, PowerProfile, ServoProfile
from .kinematics import ArmModel, JointSpec, as_joint_vector
from .planning import Box, Sphere, World
from .sync import ChannelModel

CONFIG_FORMAT = 1

TASKS = ("placement", "pipetting", "repeatability", "planning_benchmark")


# --------------------------------------------------------------------------
# calibration / scenario domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AimCalibration:
    """Operator targeting error: systematic offset plus per-attempt tremor.

    ``pos_bias`` is a fixed Cartesian miscalibration (m); ``pos_std`` the
    per-attempt isotropic scatter (m). ``tilt_bias``/``tilt_std`` do the
    same for the commanded tool pitch (rad).
    """

    pos_bias: np.ndarray  # (3,)
    pos_std: float
    tilt_bias: float
    tilt_std: float

    def __post_init__(self):
        bias = np.array(self.pos_bias, dtype=float)
        if bias.shape != (3,) or not np.all(np.isfinite(bias)):
            raise ValueError("pos_bias must be a finite 3-vector")
        if self.pos_std < 0 or self.tilt_std < 0:
            raise ValueError("pos_std and tilt_std must be >= 0")
        if not math.isfinite(self.tilt_bias):
            raise ValueError("tilt_bias must be finite")
        object.__setattr__(self, "pos_bias", bias)

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """One aim attempt: (position offset, pitch offset). Always consumes
        the same number of rng draws so streams align across presets."""
        offset = self.pos_bias + rng.normal(0.0, 1.0, size=3) * self.pos_std
        tilt = self.tilt_bias + rng.normal(0.0, 1.0) * self.tilt_std
        return offset, tilt


ZERO_AIM = AimCalibration(pos_bias=np.zeros(3), pos_std=0.0, tilt_bias=0.0, tilt_std=0.0)


@dataclass(frozen=True)
class EmulatorProfile:
    """One named calibration column: servo + power + pipette + aim."""

    name: str
    servo: ServoProfile
    power: PowerProfile
    pipette: PipetteProfile
    aim: AimCalibration

    def quiet(self) -> "EmulatorProfile":
        """Copy with every stochastic term disabled (quantization stays)."""
        return replace(
            self,
            servo=replace(self.servo, noise_std=0.0),
            pipette=replace(self.pipette, noise_std=0.0, bias_per_m=0.0),
            aim=ZERO_AIM,
        )


@dataclass(frozen=True)
class Scene:
    """A planning benchmark problem: world plus start/goal configurations."""

    name: str
    world: World
    start_q: np.ndarray
    goal_q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start_q", as_joint_vector(self.start_q))
        object.__setattr__(self, "goal_q", as_joint_vector(self.goal_q))


@dataclass(frozen=True)
class ScenarioConfig:
    """A complete, resolved experiment description."""

    task: str
    arm: ArmModel
    profile: EmulatorProfile
    channel: ChannelModel
    channel_name: str
    cycles: int
    rng_seed: int
    targets: dict = field(default_factory=dict)
    dwell_s: float = 0.9
    band_mm: float = 1.2
    benchmark: dict = field(default_factory=dict)
    output: Path | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.cycles < 1:
            raise ConfigError("cycles must be >= 1")
        if self.dwell_s < 0:
            raise ConfigError("dwell_s must be >= 0")


# --------------------------------------------------------------------------
# TOML plumbing
# --------------------------------------------------------------------------

_DATA = resources.files("armtwin") / "data"


def _packaged(relative: str):
    entry = _DATA / relative
    if not entry.is_file():
        raise ConfigError(f"no packaged data file {relative!r}")
    return entry


def _read_toml(source) -> dict:
    try:
        with source.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {source}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: invalid TOML: {exc}")
    if data.get("format") != CONFIG_FORMAT:
        raise ConfigError(f"{source}: expected format = {CONFIG_FORMAT}")
    return data


def _resolve(source: str | Path, packaged_relative: str):
    """A path that exists on disk wins; otherwise fall back to packaged data."""
    if isinstance(source, Path) or Path(source).exists():
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return path
    return _packaged(packaged_relative)


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return table[key]


def _build(cls, table: dict, context: str, **extra):
    try:
        return cls(**table, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}")


# --------------------------------------------------------------------------
# loaders
# --------------------------------------------------------------------------


def load_arm(source: str | Path = "default") -> ArmModel:
    entry = _resolve(source, f"arm/{source}.toml")
    data = _read_toml(entry)
    joints = tuple(
        _build(JointSpec, j, f"{entry}: joint {i}")
        for i, j in enumerate(_require(data, "joint", str(entry)))
    )
    return _build(
        ArmModel,
        {},
        str(entry),
        name=_require(data, "name", str(entry)),
        joints=joints,
        tool_offset=_require(data, "tool_offset", str(entry)),
    )


def _profile_from_table(name: str, table: dict, context: str) -> EmulatorProfile:
    for part in ("servo", "power", "pipette", "aim"):
        _require(table, part, context)
    return EmulatorProfile(
        name=name,
        servo=_build(ServoProfile, table["servo"], f"{context}.servo"),
        power=_build(PowerProfile, table["power"], f"{context}.power", label=name),
        pipette=_build(PipetteProfile, table["pipette"], f"{context}.pipette", label=name),
        aim=_build(AimCalibration, table["aim"], f"{context}.aim"),
    )


def load_profile(source: str | Path = "improved") -> EmulatorProfile:
    entry = _resolve(source, "profiles.toml")
    data = _read_toml(entry)
    if isinstance(source, (str,)) and source in data:
        name = str(source)
    else:
        names = [k for k in data if k != "format"]
        if len(names) != 1:
            raise ConfigError(
                f"{entry}: choose one of {sorted(names)} (got {source!r})"
            )
        name = names[0]
    return _profile_from_table(name, data[name], f"{entry}:{name}")


def load_channel(source: str | Path = "perfect") -> ChannelModel:
    entry = _resolve(source, "channels.toml")
    data = _read_toml(entry)
    if isinstance(source, str) and source in data:
        table = data[source]
        context = f"{entry}:{source}"
    else:
        names = [k for k in data if k != "format"]
        if len(names) != 1:
            raise ConfigError(f"{entry}: choose one of {sorted(names)} (got {source!r})")
        table = data[names[0]]
        context = f"{entry}:{names[0]}"
    return _build(ChannelModel, table, context)


def _scene_from_data(data: dict, context: str) -> Scene:
    spheres = tuple(
        _build(Sphere, s, f"{context}: sphere {i}") for i, s in enumerate(data.get("sphere", []))
    )
    boxes = tuple(
        _build(Box, b, f"{context}: box {i}") for i, b in enumerate(data.get("box", []))
    )
    world = _build(
        World, {}, context, spheres=spheres, boxes=boxes, clearance=data.get("clearance", 0.0)
    )
    try:
        return Scene(
            name=_require(data, "name", context),
            world=world,
            start_q=_require(data, "start_q", context),
            goal_q=_require(data, "goal_q", context),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}")


def load_scene(source: str | Path) -> Scene:
    entry = _resolve(source, f"scenes/{source}.toml")
    return _scene_from_data(_read_toml(entry), str(entry))


def list_scenes() -> tuple[str, ...]:
    files = (_DATA / "scenes").iterdir()
    return tuple(sorted(f.name[: -len(".toml")] for f in files if f.name.endswith(".toml")))


def scene_suite(directory: str | Path | None = None) -> tuple[Scene, ...]:
    """All scenes from a directory, or the shipped suite when None."""
    if directory is None:
        return tuple(load_scene(name) for name in list_scenes())
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"scene directory not found: {directory}")
    files = sorted(directory.glob("*.toml"))
    if not files:
        raise ConfigError(f"no scene files in {directory}")
    return tuple(load_scene(f) for f in files)


def list_scenarios() -> tuple[str, ...]:
    files = (_DATA / "scenarios").iterdir()
    return tuple(sorted(f.name[: -len(".toml")] for f in files if f.name.endswith(".toml")))


def load_scenario(source: str | Path, **overrides) -> ScenarioConfig:
    """Resolve a scenario file into live objects.

    ``overrides`` replace top-level scalar keys (cycles, rng_seed, ...)
    before validation, so the CLI can tweak a preset without editing it.
    """
    entry = _resolve(source, f"scenarios/{source}.toml")
    data = _read_toml(entry)
    data.update(overrides)
    context = str(entry)

    task = _require(data, "task", context)
    arm = load_arm(data.get("arm", "default"))
    profile = load_profile(data.get("profile", "improved"))
    channel_name = data.get("channel", "perfect")
    channel = load_channel(channel_name)
    output = data.get("output")
    return ScenarioConfig(
        task=task,
        arm=arm,
        profile=profile,
        channel=channel,
        channel_name=str(channel_name),
        cycles=int(_require(data, "cycles", context)),
        rng_seed=int(_require(data, "rng_seed", context)),
        targets=dict(data.get("targets", {})),
        dwell_s=float(data.get("dwell_s", 0.9)),
        band_mm=float(data.get("band_mm", 1.2)),
        benchmark=dict(data.get("benchmark", {})),
        output=Path(output) if output else None,
    )
