"""Geometric backstepping controller for the quadrotor-pendulum system.

The pendulum direction ``y`` is driven to ``e3`` through a desired thrust
direction ``z_d(y, y')``; the attitude loop then makes ``z = R e3`` track
``z_d`` using a tracking law on the sphere, corrected by a coupling term
``beta`` that accounts for the mismatch ``z - z_d`` seen by the pendulum.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geom
from .dynamics import ControlInput, PhysicalParams, SystemState, pendulum_rhs
from .geom import E3, cross, dot, norm
from .lyapunov import v1, v2


class ControllerError(RuntimeError):
    pass


class DegenerateVirtualControl(ControllerError):
    pass


class NonTangentResidual(ControllerError):
    pass


class InsufficientHistory(ControllerError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    """Positive gains ``K = (k_d, k1, k2)``."""

    k_d: float
    k1: float
    k2: float

    def __post_init__(self):
        for key in ("k_d", "k1", "k2"):
            val = getattr(self, key)
            if not np.isfinite(val) or val <= 0.0:
                raise ValueError(f"{key}: gain must be positive, got {val!r}")

    def as_tuple(self):
        return (self.k_d, self.k1, self.k2)


@dataclass(frozen=True)
class ControlLaw:
    """Structural choices in the control law that admit more than one reading.

    Attributes:
        damping_sign: sign of the ``k_d y'`` term inside ``f_p``. With
            ``hat(y)^2 y' = -y'`` only ``-1`` yields a damped pendulum;
            ``+1`` adds energy to the swing and diverges.
        beta_mode: ``"transport"`` uses ``A = <y,z> I - z y^T`` (the map
            ``v -> (z x v) x y``); ``"min_norm"`` uses the minimum-norm
            matrix solving ``A v_e = y'``.
        beta_sign: overall sign applied to ``beta``.
    """

    damping_sign: float = -1.0
    beta_mode: str = "transport"
    beta_sign: float = 1.0

    def __post_init__(self):
        if self.damping_sign not in (1.0, -1.0) or self.beta_sign not in (1.0, -1.0):
            raise ValueError("signs must be +1 or -1")
        if self.beta_mode not in ("transport", "min_norm", "off"):
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")


DEFAULT_LAW = ControlLaw()


@dataclass(frozen=True)
class ControllerDiagnostics:
    k_p: float
    f_p: np.ndarray
    z_d: np.ndarray
    zd_dot: np.ndarray
    zd_ddot: np.ndarray
    v_e: np.ndarray
    beta: np.ndarray
    u_fb: np.ndarray
    f: float
    mu: np.ndarray
    rotor_thrusts: np.ndarray
    rotor_reversal: bool
    moment_residual: float
    V1: float
    V2: float

    @property
    def V(self) -> float:
        return self.V1 + self.V2


def gain_kp(ydot: np.ndarray, params: PhysicalParams) -> float:
    """State-dependent pendulum stiffness ``(M+m) g / (M l (|e3| + |y'|))``."""
    return (params.M + params.m) * params.g / (params.M * params.l * (1.0 + norm(ydot)))


def virtual_control(y, ydot, gains: ControllerGains, params: PhysicalParams, law: ControlLaw = DEFAULT_LAW):
    """Desired thrust direction for the pendulum loop.

    Returns:
        ``(f_p, z_d, f)`` with ``f_p = k_p e3 + s k_d y'`` (``s`` the law's
        damping sign), ``z_d = f_p / |f_p|`` and ``f = -M l |f_p|``.
    """
    k_p = gain_kp(ydot, params)
    f_p = k_p * E3 + (law.damping_sign * gains.k_d) * ydot
    n = norm(f_p)
    if n <= 1e-9:
        raise DegenerateVirtualControl(f"|f_p| = {n:.3e}")
    return f_p, f_p / n, -params.M * params.l * n


def zd_derivatives(history: Sequence[np.ndarray], h: float):
    """Backward finite-difference rates of ``z_d`` from its sampled history.

    ``history`` is ordered oldest to newest with uniform spacing ``h``. The
    first derivative uses the 3-point second-order stencil; the second
    derivative uses the 4-point second-order stencil when four samples are
    available and the 3-point one otherwise. The rate is projected onto the
    tangent plane of the newest sample.

    Raises:
        InsufficientHistory: with fewer than three samples.
    """
    if len(history) < 3:
        raise InsufficientHistory(f"need 3 samples, have {len(history)}")
    z0, z1, z2 = history[-1], history[-2], history[-3]
    # stencils written on successive differences so constant data gives exact zeros
    a, b = z0 - z1, z1 - z2
    zd_dot = (3.0 * a - b) / (2.0 * h)
    if len(history) >= 4:
        zd_ddot = (2.0 * a - 3.0 * b + (z2 - history[-4])) / (h * h)
    else:
        zd_ddot = (a - b) / (h * h)
    return geom.tangent_project(z0, zd_dot), zd_ddot


class ReferenceHistory:
    """Ring buffer of past ``z_d`` samples owned by one simulation."""

    def __init__(self, h: float, size: int = 4):
        self.h = h
        self.samples: deque = deque(maxlen=size)

    def push(self, z_d: np.ndarray):
        self.samples.append(np.array(z_d, dtype=float))

    def derivatives(self):
        if len(self.samples) < 3:
            return np.zeros(3), np.zeros(3)
        return zd_derivatives(list(self.samples), self.h)


def zd_derivatives_analytic(y, ydot, z, zdot, gains: ControllerGains, params: PhysicalParams,
                            law: ControlLaw = DEFAULT_LAW):
    """Exact ``(z_d, z_d', z_d'')`` along the closed-loop flow.

    ``z_d`` depends on ``y'`` only, so its rates need ``y''`` and ``y'''``,
    which the pendulum equation provides from the current state (neither
    depends on the moment, so there is no algebraic loop). ``|y'|`` is not
    differentiable at ``y' = 0``; there the right-sided limit along the
    forward flow is used.
    """
    M, l = params.M, params.l
    Ml = M * l
    C = (params.M + params.m) * params.g / Ml
    kd = law.damping_sign * gains.k_d

    s = norm(ydot)
    k_p = C / (1.0 + s)
    f_p = k_p * E3 + kd * ydot
    n = norm(f_p)
    if n <= 1e-9:
        raise DegenerateVirtualControl(f"|f_p| = {n:.3e}")
    z_d = f_p / n
    f = -Ml * n

    yddot = pendulum_rhs(y, ydot, f, z, params)
    a = norm(yddot)
    yy = dot(ydot, yddot)
    if s > 1e-12:
        s_d = yy / s
    else:
        s_d = a
    kp_d = -C * s_d / (1.0 + s) ** 2
    fp_d = kp_d * E3 + kd * yddot
    n_d = dot(z_d, fp_d)
    zd_dot = (fp_d - n_d * z_d) / n

    f_d = -Ml * n_d
    yz = dot(y, z)
    y3 = (
        -2.0 * yy * y
        - s * s * ydot
        + (f_d / Ml) * (yz * y - z)
        + (f / Ml) * (yz * ydot + (dot(ydot, z) + dot(y, zdot)) * y - zdot)
    )
    if s > 1e-12:
        s_dd = (a * a + dot(ydot, y3)) / s - yy * yy / s**3
    elif a > 0.0:
        s_dd = dot(yddot, y3) / a
    else:
        s_dd = 0.0
    kp_dd = -C * s_dd / (1.0 + s) ** 2 + 2.0 * C * s_d * s_d / (1.0 + s) ** 3
    fp_dd = kp_dd * E3 + kd * y3
    n_dd = dot(zd_dot, fp_d) + dot(z_d, fp_dd)
    zd_ddot = (fp_dd - 2.0 * n_d * zd_dot - n_dd * z_d) / n
    return z_d, zd_dot, zd_ddot


def velocity_error(z, zdot, z_d, zd_dot) -> np.ndarray:
    """``v_e = z' - (z_d x z_d') x z``."""
    return zdot - cross(cross(z_d, zd_dot), z)


def beta_correction(y, ydot, z, z_d, f_p, v_e=None, law: ControlLaw = DEFAULT_LAW) -> np.ndarray:
    """Coupling force ``beta = -|f_p| A^T (z - z_d)``.

    In ``"transport"`` mode ``A`` is the matrix of ``v -> (z x v) x y``.
    In ``"min_norm"`` mode ``A`` is the minimum-norm solution of
    ``A v_e = y'``, i.e. ``y' v_e^T / |v_e|^2`` (zero when ``v_e`` vanishes).
    """
    if law.beta_mode == "off":
        return np.zeros(3)
    e = z - z_d
    if law.beta_mode == "transport":
        A = geom.transport_matrix(y, z)
    else:
        if v_e is None:
            raise ValueError("min_norm beta needs v_e")
        # rows of A solve v_e . a_i = ydot_i in the minimum-norm sense
        A = np.array([geom.min_norm_lsq(v_e[None, :], ydot[i : i + 1]) for i in range(3)])
    return law.beta_sign * (-norm(f_p)) * (A.T @ e)


def tracking_feedback(z, zdot, z_d, zd_dot, zd_ddot, beta, gains: ControllerGains):
    """Sphere tracking law for the thrust axis.

    Returns:
        ``(u_fb, v_e)`` where
        ``u_fb = -k1 hat(z)^2 z_d - k2 v_e + grad_{z'}(tau z_d') - hat(z)^2 beta``.
    """
    v_e = velocity_error(z, zdot, z_d, zd_dot)
    Z2 = geom.hat_sq(z)
    ff = geom.feedforward(z, zdot, z_d, zd_dot, zd_ddot)
    u_fb = -gains.k1 * (Z2 @ z_d) - gains.k2 * v_e + ff - Z2 @ beta
    return u_fb, v_e


def moment_rhs(state: SystemState, u_fb: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Right-hand side ``r`` of ``hat(I^-1 mu) e3 = r`` for the commanded ``u_fb``."""
    w = state.omega
    J = params.inertia
    b = params.inertia_inv @ cross(J @ w, w)
    w_e3 = cross(w, E3)
    zdot = state.R @ w_e3
    z = state.R[:, 2]
    return cross(w, w_e3) + cross(b, E3) + state.R.T @ (dot(zdot, zdot) * z - u_fb)


def extract_moment(state: SystemState, u_fb: np.ndarray, params: PhysicalParams, tol: float = 1e-6) -> np.ndarray:
    """Body moment realising ``z'' = -|z'|^2 z + u_fb``.

    Only ``(I^-1 mu) x e3`` is constrained; the yaw component of
    ``I^-1 mu`` is set to zero, giving ``mu = I (e3 x r)``.

    Raises:
        NonTangentResidual: if ``|<e3, r>| > tol``.
    """
    r = moment_rhs(state, u_fb, params)
    if abs(r[2]) > tol:
        raise NonTangentResidual(f"<e3, rhs> = {r[2]:.3e}")
    return params.inertia @ cross(E3, r)


def allocation_matrix(params: PhysicalParams) -> np.ndarray:
    d, c = params.d, params.c
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [0.0, -d, 0.0, d],
            [d, 0.0, -d, 0.0],
            [-c, c, -c, c],
        ]
    )


def allocate_rotors(f: float, mu: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Per-rotor thrusts producing total thrust ``f`` and moment ``mu``."""
    # closed-form inverse of the allocation matrix
    d, c = params.d, params.c
    m1, m2, m3 = mu
    a = 0.25 * f
    b = 0.25 * m3 / c
    return np.array(
        [
            a + 0.5 * m2 / d - b,
            a - 0.5 * m1 / d + b,
            a - 0.5 * m2 / d - b,
            a + 0.5 * m1 / d + b,
        ]
    )


def rotor_wrench(thrusts: np.ndarray, params: PhysicalParams):
    """Forward map: rotor thrusts to ``(f, mu)``."""
    out = allocation_matrix(params) @ np.asarray(thrusts, dtype=float)
    return float(out[0]), out[1:]


def _evaluate(state: SystemState, gains, params, history, law):
    y, ydot = state.y, state.ydot
    R, w = state.R, state.omega
    z = R[:, 2].copy()
    zdot = R @ cross(w, E3)
    f_p, z_d, f = virtual_control(y, ydot, gains, params, law)
    if history is None:
        _, zd_dot, zd_ddot = zd_derivatives_analytic(y, ydot, z, zdot, gains, params, law)
    else:
        history.push(z_d)
        zd_dot, zd_ddot = history.derivatives()
    v_e = velocity_error(z, zdot, z_d, zd_dot)
    beta = beta_correction(y, ydot, z, z_d, f_p, v_e, law)
    u_fb, v_e = tracking_feedback(z, zdot, z_d, zd_dot, zd_ddot, beta, gains)
    r = moment_rhs(state, u_fb, params)
    if abs(r[2]) > 1e-6:
        raise NonTangentResidual(f"<e3, rhs> = {r[2]:.3e}")
    mu = params.inertia @ cross(E3, r)
    return z, zdot, f_p, z_d, f, zd_dot, zd_ddot, v_e, beta, u_fb, r, mu


def control_step(state: SystemState, gains: ControllerGains, params: PhysicalParams,
                 reference_history: ReferenceHistory | None = None, law: ControlLaw = DEFAULT_LAW):
    """Evaluate the full control law at ``state``.

    With ``reference_history`` the rates of ``z_d`` come from finite
    differences over past samples (the new sample is pushed first);
    otherwise they are computed analytically.

    Returns:
        ``(ControlInput, ControllerDiagnostics)``
    """
    z, zdot, f_p, z_d, f, zd_dot, zd_ddot, v_e, beta, u_fb, r, mu = _evaluate(
        state, gains, params, reference_history, law
    )
    k_p = gain_kp(state.ydot, params)
    thrusts = allocate_rotors(f, mu, params)
    diag = ControllerDiagnostics(
        k_p=k_p,
        f_p=f_p,
        z_d=z_d,
        zd_dot=zd_dot,
        zd_ddot=zd_ddot,
        v_e=v_e,
        beta=beta,
        u_fb=u_fb,
        f=f,
        mu=mu,
        rotor_thrusts=thrusts,
        rotor_reversal=bool(np.any(thrusts * math.copysign(1.0, f) < 0.0)),
        moment_residual=abs(float(r[2])),
        V1=v1(state.y, state.ydot, k_p),
        V2=v2(z, zdot, z_d, zd_dot, gains.k1),
    )
    return ControlInput(f, mu), diag


def control_input(state: SystemState, gains: ControllerGains, params: PhysicalParams,
                  law: ControlLaw = DEFAULT_LAW) -> ControlInput:
    """Analytic-rate control law without diagnostics (used at integrator stages)."""
    out = _evaluate(state, gains, params, None, law)
    return ControlInput(out[4], out[11])
