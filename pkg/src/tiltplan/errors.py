"""Exception types shared across the planning pipeline."""


class PlannerError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PlannerError):
    """An input lies outside the physical domain of an operation."""


class DegenerateStateError(DomainError):
    """State carries no usable airflow (zero airspeed and zero thrust)."""


class SingularReconstructionError(DomainError):
    """Thrust cannot be recovered: the tilt-dependent divisor vanishes."""


class DegenerateEnergyError(DomainError):
    """Kinetic energy at or below the guard floor where dynamics divide by E."""


class DegeneratePathError(PlannerError):
    """Waypoints do not define a usable arc."""


class UnsupportedPathError(PlannerError):
    """Path geometry outside what the planner handles, e.g. vertical segments."""


class TableBuildError(PlannerError):
    """Lookup-table construction failed; message names the offending grid point."""


class ScenarioError(PlannerError):
    """Scenario file missing, malformed, or inconsistent."""


class StageError(PlannerError):
    """A solve stage failed.  Carries which stage produced the failure."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
