"""Geometric swing-up control of a spherical inverted pendulum on a quadrotor."""

from .controller import ControlLaw, ControllerGains, control_input, control_step
from .dynamics import ControlInput, PhysicalParams, SystemState, hover_state
from .integrator import IntegratorConfig, NonFiniteState, TrajectoryLog, rk4_step, simulate
from .lyapunov import monitor
from .presets import preset

__all__ = [
    "ControlInput",
    "ControlLaw",
    "ControllerGains",
    "IntegratorConfig",
    "NonFiniteState",
    "PhysicalParams",
    "SystemState",
    "TrajectoryLog",
    "control_input",
    "control_step",
    "hover_state",
    "monitor",
    "preset",
    "rk4_step",
    "simulate",
]

__version__ = "0.1.0"
