"""Ring-road simulator for adaptive cruise control, vehicle following and coordinated platooning."""

from .core import (
    ConfigError, ControllerGains, CoordinationPlan, Fidelity, InitialVehicle, Mode, PlanKind, RingScenario,
    VehicleParams,
)
from .sim import SimulationError, Simulator, TrajectoryLog, run

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ControllerGains", "CoordinationPlan", "Fidelity", "InitialVehicle", "Mode", "PlanKind",
    "RingScenario", "SimulationError", "Simulator", "TrajectoryLog", "VehicleParams", "run",
]
