"""Exception types shared across the simulator."""


class ArmTwinError(Exception):
    """Base class for all armtwin errors."""


class Unreachable(ArmTwinError):
    """Target lies outside the arm's reachable workspace."""


class Degenerate(ArmTwinError):
    """Target admits infinitely many solutions (singular geometry)."""


class NoPathFound(ArmTwinError):
    """Planner exhausted its iteration budget without connecting the query."""


class InvalidEndpoint(ArmTwinError):
    """Planner start or goal violates joint limits or is in collision."""


class Overweight(ArmTwinError):
    """Object exceeds the gripper payload limit."""


class OutOfReach(ArmTwinError):
    """Object is farther from the tool point than the grasp tolerance."""


class DecodeError(ArmTwinError):
    """A serialized frame or report failed validation (magic, version,
    length or checksum)."""


class MismatchedTraces(ArmTwinError):
    """Drift computation was given traces with non-overlapping time ranges."""


class ScenarioError(ArmTwinError):
    """A trial cycle failed; wraps the underlying planner/emulator error."""


class ConfigError(ArmTwinError):
    """A configuration file is missing, malformed or violates an invariant."""


class IoError(ArmTwinError):
    """A report or artifact could not be written."""
