"""Fixed-step closed-loop integration with projection back onto S^2 x SO(3).

Translational, angular-rate and pendulum coordinates are advanced with the
classical RK4 tableau. Attitude is advanced multiplicatively,
``R <- R exp(dt * w_eff)``, where ``w_eff`` is the RK4 combination of the
stage body rates pulled back through the inverse ``exp`` Jacobian
(Runge-Kutta-Munthe-Kaas), which keeps the step fourth order on SO(3).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import geom, kernel
from .controller import (
    DEFAULT_LAW,
    ControlLaw,
    ControllerGains,
    ReferenceHistory,
    control_input,
    control_step,
)
from .dynamics import ControlInput, PhysicalParams, SystemState, accelerations

logger = logging.getLogger(__name__)

Policy = Union[ControlInput, Callable[[SystemState], ControlInput]]


class NonFiniteState(FloatingPointError):
    """Integration produced NaN/inf; ``log`` holds everything up to the last valid step."""

    def __init__(self, msg, log=None):
        super().__init__(msg)
        self.log = log


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_end: float = 6.5
    projection: bool = True
    drift_report_every: int = 0
    derivatives: str = "analytic"

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.01):
            raise ValueError(f"dt: must lie in (0, 0.01], got {self.dt!r}")
        if self.drift_report_every < 0:
            raise ValueError("drift_report_every: must be >= 0")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end: must be positive, got {self.t_end!r}")
        if self.derivatives not in ("analytic", "history"):
            raise ValueError(f"derivatives: unknown mode {self.derivatives!r}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


@dataclass(frozen=True)
class Corrections:
    """Magnitudes removed by :func:`project_state` (measured before repair)."""

    y_norm: float
    ydot_normal: float
    R_orth: float


def project_state(state: SystemState):
    """Renormalise ``y``, tangent-project ``y'`` and orthonormalise ``R``.

    Returns:
        ``(projected_state, Corrections)``
    """
    ny = geom.norm(state.y)
    y = state.y / ny
    ydot = geom.tangent_project(y, state.ydot)
    orth = float(np.linalg.norm(state.R.T @ state.R - geom.I3))
    # the polar factor of an orthogonal matrix is itself; skip the SVD at rounding level
    R = geom.orthonormalize(state.R) if orth > 1e-14 else state.R
    corr = Corrections(abs(ny - 1.0), abs(geom.dot(y, state.ydot)), orth)
    return SystemState(state.x, state.xdot, R, state.omega, y, ydot), corr


def _policy(u: Policy):
    if isinstance(u, ControlInput):
        return lambda _s: u
    return u


def rk4_raw(state: SystemState, u: Policy, dt: float, params: PhysicalParams, u0: ControlInput | None = None) -> SystemState:
    """One RK4/RKMK step without projection. ``u0`` may supply the first-stage input."""
    pol = _policy(u)
    x, xd, R, w, y, yd = state.x, state.xdot, state.R, state.omega, state.y, state.ydot
    ks = []
    theta = np.zeros(3)
    st = state
    for i, c in enumerate((0.0, 0.5, 0.5, 1.0)):
        if i > 0:
            kx, kxd, kth, kw, ky, kyd = ks[-1]
            h = c * dt
            theta = h * kth
            st = SystemState(x + h * kx, xd + h * kxd, R @ geom.exp_so3(theta), w + h * kw, y + h * ky, yd + h * kyd)
        ui = u0 if (i == 0 and u0 is not None) else pol(st)
        xdd, wd, ydd = accelerations(st, ui, params)
        ks.append((st.xdot, xdd, geom.dexp_inv(theta, st.omega), wd, st.ydot, ydd))
    inc = [(dt / 6.0) * (a + 2.0 * b + 2.0 * c + e) for a, b, c, e in zip(*ks)]
    return SystemState(x + inc[0], xd + inc[1], R @ geom.exp_so3(inc[2]), w + inc[3], y + inc[4], yd + inc[5])


def rk4_step(state: SystemState, u: Policy, dt: float, params: PhysicalParams, project: bool = True) -> SystemState:
    """Advance ``state`` by ``dt``.

    ``u`` is either a fixed :class:`ControlInput` (held over the step) or a
    callable evaluated at every stage.

    Raises:
        NonFiniteState: if the result contains NaN or inf.
    """
    new = rk4_raw(state, u, dt, params)
    if not np.all(np.isfinite(new.flat())):
        raise NonFiniteState("non-finite state after RK4 step")
    if project:
        new, _ = project_state(new)
    return new


@dataclass
class TrajectoryLog:
    """Per-tick record of a closed-loop run; arrays are stacked over ticks."""

    dt: float
    gains: ControllerGains
    params: PhysicalParams
    law: ControlLaw = DEFAULT_LAW
    t: np.ndarray = None
    x: np.ndarray = None
    xdot: np.ndarray = None
    R: np.ndarray = None
    omega: np.ndarray = None
    y: np.ndarray = None
    ydot: np.ndarray = None
    f: np.ndarray = None
    mu: np.ndarray = None
    rotor_thrusts: np.ndarray = None
    rotor_reversal: np.ndarray = None
    k_p: np.ndarray = None
    z: np.ndarray = None
    z_d: np.ndarray = None
    zd_dot: np.ndarray = None
    v_e: np.ndarray = None
    beta: np.ndarray = None
    u_fb: np.ndarray = None
    moment_residual: np.ndarray = None
    V1: np.ndarray = None
    V2: np.ndarray = None
    drift_y: np.ndarray = None
    drift_R: np.ndarray = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return 0 if self.t is None else len(self.t)

    @property
    def V(self) -> np.ndarray:
        return self.V1 + self.V2

    @property
    def e3_dot_y(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def e3_dot_z(self) -> np.ndarray:
        return self.z[:, 2]

    def state(self, k: int) -> SystemState:
        return SystemState(self.x[k], self.xdot[k], self.R[k], self.omega[k], self.y[k], self.ydot[k])


_VEC = ("x", "xdot", "omega", "y", "ydot", "mu", "z", "z_d", "zd_dot", "v_e", "beta", "u_fb")


def _finalize(log: TrajectoryLog, rows: dict):
    for key, vals in rows.items():
        setattr(log, key, np.array(vals))
    return log


def final_state(initial: SystemState, gains: ControllerGains, params: PhysicalParams,
                cfg: IntegratorConfig = IntegratorConfig(), law: ControlLaw = DEFAULT_LAW,
                held: ControlInput | None = None) -> SystemState:
    """State at ``cfg.n_steps * cfg.dt`` without logging, for convergence studies.

    Runs the compiled closed loop with analytic rates, or applies the fixed
    input ``held`` when given. Projection is always on.
    """
    s = initial
    hold = held is not None
    f0, mu0 = (held.f, held.mu) if hold else (0.0, np.zeros(3))
    out = kernel.run(s.x, s.xdot, s.R, s.omega, s.y, s.ydot, cfg.dt, cfg.n_steps, *kernel.pack(gains, params, law),
                     hold, f0, mu0)
    new = SystemState(*out)
    if not np.all(np.isfinite(new.flat())):
        raise NonFiniteState("non-finite final state")
    return new


def simulate(initial: SystemState, gains: ControllerGains, params: PhysicalParams,
             cfg: IntegratorConfig = IntegratorConfig(), law: ControlLaw = DEFAULT_LAW,
             compiled: bool = True) -> TrajectoryLog:
    """Closed-loop run: evaluate the controller, then take one RK4 step, per tick.

    The log has ``cfg.n_steps + 1`` rows (``t = 0`` included). With
    ``cfg.derivatives == "history"`` the input is held over each step and
    ``z_d`` rates come from finite differences over past ticks; otherwise the
    controller is re-evaluated at every RK4 stage with exact rates.

    ``compiled`` selects the numba kernel for the RK4 stages; the reference
    Python path gives the same trajectory to rounding level.

    Raises:
        NonFiniteState: the partially filled log is attached as ``.log``.
    """
    packed = kernel.pack(gains, params, law)
    if compiled:
        # trigger (cached) compilation outside the timed loop
        kernel.rk4(initial.x, initial.xdot, initial.R, initial.omega, initial.y, initial.ydot, cfg.dt, -1.0,
                   np.zeros(3), False, *packed)
    t0 = time.perf_counter()
    n = cfg.n_steps
    keys = ("t",) + _VEC + ("R", "f", "rotor_thrusts", "rotor_reversal", "k_p", "moment_residual", "V1", "V2",
                           "drift_y", "drift_R")
    rows = {k: [] for k in keys}
    log = TrajectoryLog(dt=cfg.dt, gains=gains, params=params, law=law)
    history = ReferenceHistory(cfg.dt) if cfg.derivatives == "history" else None

    def policy(s):
        return control_input(s, gains, params, law)

    state = initial
    drift_y, drift_R = 0.0, 0.0
    for k in range(n + 1):
        try:
            u, dg = control_step(state, gains, params, history, law)
        except (ValueError, ArithmeticError) as exc:
            raise NonFiniteState(f"controller failed at t={k * cfg.dt:.4f}: {exc}", _finalize(log, rows)) from exc
        rows["t"].append(k * cfg.dt)
        for key in ("x", "xdot", "omega", "y", "ydot", "R"):
            rows[key].append(getattr(state, key))
        rows["z"].append(state.R[:, 2].copy())
        for key in ("mu", "z_d", "zd_dot", "v_e", "beta", "u_fb", "f", "rotor_thrusts", "rotor_reversal", "k_p",
                    "moment_residual", "V1", "V2"):
            rows[key].append(getattr(dg, key))
        rows["drift_y"].append(drift_y)
        rows["drift_R"].append(drift_R)
        if k == n:
            break
        if compiled:
            raw = SystemState(*kernel.rk4(state.x, state.xdot, state.R, state.omega, state.y, state.ydot, cfg.dt,
                                          u.f, u.mu, history is not None, *packed))
        elif history is None:
            raw = rk4_raw(state, policy, cfg.dt, params, u0=u)
        else:
            raw = rk4_raw(state, u, cfg.dt, params)
        if not np.all(np.isfinite(raw.flat())):
            raise NonFiniteState(f"non-finite state at t={(k + 1) * cfg.dt:.4f}", _finalize(log, rows))
        if cfg.projection:
            state, corr = project_state(raw)
            drift_y, drift_R = corr.y_norm, corr.R_orth
        else:
            state = raw
            drift_y = abs(geom.norm(raw.y) - 1.0)
            drift_R = float(np.linalg.norm(raw.R.T @ raw.R - geom.I3))
        if cfg.drift_report_every and (k + 1) % cfg.drift_report_every == 0:
            logger.info("t=%.4f drift |y|-1=%.3e R=%.3e", (k + 1) * cfg.dt, drift_y, drift_R)
    log.wall_time = time.perf_counter() - t0
    return _finalize(log, rows)
