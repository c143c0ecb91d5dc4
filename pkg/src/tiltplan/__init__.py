"""Robust minimum-power transition planning for tiltwing aircraft.

The pipeline splits the maneuver into an energy allocation stage solved as a
linear program, an offline difference-of-convex decomposition of the
flight-path dynamics, and a tube-based successive convex program whose
output is certified against the nonlinear model.
"""

from .errors import PlannerError, ScenarioError, StageError
from .planner import (
    BoundaryConditions,
    PlannerConfig,
    Scenario,
    Trajectory,
    ValidationReport,
    load_scenario,
    run_algorithm1,
    validate,
)
from .vehicle import AircraftParams, FlightState

__version__ = "0.1.0"

__all__ = [
    "AircraftParams",
    "BoundaryConditions",
    "FlightState",
    "PlannerConfig",
    "PlannerError",
    "Scenario",
    "ScenarioError",
    "StageError",
    "Trajectory",
    "ValidationReport",
    "__version__",
    "load_scenario",
    "run_algorithm1",
    "validate",
]
