"""Equations of motion of a quadrotor carrying a spherical pendulum.

Sign conventions: gravity enters the
translational equation as ``+(M + m) g e3`` and the total thrust force on
the vehicle is ``-f z`` with ``z = R e3``, so hover needs a *negative*
thrust scalar ``f = -(M + m) g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import E3, I3, cross, dot, hat, is_rotation


class ParameterError(ValueError):
    """Raised when physical parameters are out of range."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of the vehicle and pendulum.

    Attributes:
        M: quadrotor mass [kg]
        m: pendulum bob mass [kg]
        l: pendulum length [m]
        inertia: body-frame inertia of the quadrotor [kg m^2]
        g: gravity magnitude [m/s^2]
        d: pivot-to-rotor arm [m]
        c: rotor torque/thrust coefficient [m]
    """

    M: float = 0.4
    m: float = 0.1
    l: float = 0.5
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.0820, 0.0845, 0.1377]))
    g: float = 9.81
    d: float = 0.2
    c: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.array(self.inertia, dtype=float).reshape(3, 3))
        for key in ("M", "m", "l", "g", "d", "c"):
            val = getattr(self, key)
            if not np.isfinite(val) or val <= 0.0:
                raise ParameterError(key, f"must be positive, got {val!r}")
        J = self.inertia
        if not np.allclose(J, J.T, atol=1e-12):
            raise ParameterError("inertia", "must be symmetric")
        if np.min(np.linalg.eigvalsh(J)) <= 0.0:
            raise ParameterError("inertia", "must be positive definite")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(J))

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    @property
    def hover_thrust(self) -> float:
        """Thrust scalar holding the upright equilibrium, ``-(M + m) g``."""
        return -(self.M + self.m) * self.g

    def __eq__(self, other):
        if not isinstance(other, PhysicalParams):
            return NotImplemented
        return all(getattr(self, k) == getattr(other, k) for k in ("M", "m", "l", "g", "d", "c")) and bool(
            np.array_equal(self.inertia, other.inertia)
        )

    __hash__ = None


@dataclass(frozen=True)
class SystemState:
    """Full configuration and velocity of the coupled system.

    ``omega`` is the body-frame angular velocity; ``y`` is the unit vector
    from the pivot to the bob in the spatial frame.
    """

    x: np.ndarray
    xdot: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    y: np.ndarray
    ydot: np.ndarray

    def __post_init__(self):
        for name in ("x", "xdot", "omega", "y", "ydot"):
            v = getattr(self, name)
            if not (type(v) is np.ndarray and v.shape == (3,) and v.dtype == np.float64):
                object.__setattr__(self, name, np.asarray(v, dtype=float).reshape(3))
        R = self.R
        if not (type(R) is np.ndarray and R.shape == (3, 3) and R.dtype == np.float64):
            object.__setattr__(self, "R", np.asarray(R, dtype=float).reshape(3, 3))

    @property
    def z(self) -> np.ndarray:
        return z_of(self.R)

    @property
    def zdot(self) -> np.ndarray:
        return self.R @ cross(self.omega, E3)

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (
            abs(np.linalg.norm(self.y) - 1.0) <= tol
            and abs(dot(self.y, self.ydot)) <= tol
            and is_rotation(self.R)
        )

    def replace(self, **kw) -> "SystemState":
        return replace(self, **kw)

    def flat(self) -> np.ndarray:
        """All 24 numbers in (x, xdot, R row-major, omega, y, ydot) order."""
        return np.concatenate([self.x, self.xdot, self.R.ravel(), self.omega, self.y, self.ydot])


@dataclass(frozen=True)
class ControlInput:
    """Total thrust scalar ``f`` [N] and body moment ``mu`` [N m]."""

    f: float
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(3))


@dataclass(frozen=True)
class StateDerivative:
    xdot: np.ndarray
    xddot: np.ndarray
    Rdot: np.ndarray
    omegadot: np.ndarray
    ydot: np.ndarray
    yddot: np.ndarray


def z_of(R: np.ndarray) -> np.ndarray:
    """Thrust axis ``R e3`` in the spatial frame."""
    return R[:, 2].copy()


def attitude_rhs(omega: np.ndarray, mu: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Euler's equation ``I w' + w x I w = -mu`` solved for ``w'``."""
    J = params.inertia
    return params.inertia_inv @ (cross(J @ omega, omega) - mu)


def pendulum_rhs(y, ydot, f: float, z, params: PhysicalParams) -> np.ndarray:
    """``y'' = -|y'|^2 y + f/(M l) hat(y)^2 z``."""
    yz = dot(y, z)
    return -dot(ydot, ydot) * y + (f / (params.M * params.l)) * (yz * y - z)


def translation_rhs(state: SystemState, f: float, yddot: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Pivot acceleration from ``-(m+M) x'' - m l y'' + (M+m) g e3 = -f z``."""
    mt = params.M + params.m
    return params.g * E3 + (f * z_of(state.R) - params.m * params.l * yddot) / mt


def accelerations(state: SystemState, u: ControlInput, params: PhysicalParams):
    """``(x'', w', y'')`` at ``state`` under input ``u``."""
    R = state.R
    z = R[:, 2]
    f = u.f
    yddot = pendulum_rhs(state.y, state.ydot, f, z, params)
    xddot = params.g * E3 + (f * z - params.m * params.l * yddot) / (params.M + params.m)
    return xddot, attitude_rhs(state.omega, u.mu, params), yddot


def coupled_rhs(state: SystemState, u: ControlInput, params: PhysicalParams) -> StateDerivative:
    xddot, omegadot, yddot = accelerations(state, u, params)
    return StateDerivative(
        xdot=state.xdot,
        xddot=xddot,
        Rdot=state.R @ hat(state.omega),
        omegadot=omegadot,
        ydot=state.ydot,
        yddot=yddot,
    )


def hover_state(x=(0.0, 0.0, 0.0), xdot=(0.0, 0.0, 0.0)) -> SystemState:
    """Upright equilibrium: ``y = z = e3`` with everything at rest."""
    return SystemState(
        x=np.array(x, float), xdot=np.array(xdot, float), R=I3.copy(), omega=np.zeros(3), y=E3.copy(), ydot=np.zeros(3)
    )
