"""The five swing-up experiments and their shared initial conditions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .controller import ControllerGains
from .dynamics import PhysicalParams, SystemState
from .geom import norm, tangent_project

log = logging.getLogger(__name__)

INV_SQRT2 = 0.70710678

R0 = np.array(
    [
        [0.36, 0.48, -0.8],
        [-0.8, 0.6, 0.0],
        [0.48, 0.64, 0.60],
    ]
)
OMEGA0 = np.array([0.8, -0.3, 0.5])
X0 = np.array([1.0, 1.0, 1.0])
XDOT0 = np.array([2.0, 1.5, 1.0])

# id: (y(0), y'(0), (k_d, k1, k2)) exactly as tabulated
TABLE = {
    1: ((INV_SQRT2, 0.0, INV_SQRT2), (0.5, 0.0, -0.5), (1.0, 8.0, 4.0)),
    2: ((INV_SQRT2, 0.0, INV_SQRT2), (0.7, 0.0, 0.7), (1.0, 9.0, 4.4)),
    3: ((0.1, 0.0995, -0.99), (2.2263, 0.25, 0.25), (1.0, 11.0, 5.0)),
    4: ((0.0, 0.0, -1.0), (0.0, 0.0, 0.0), (1.0, 12.0, 5.0)),
    5: ((-INV_SQRT2, 0.0, INV_SQRT2), (0.7, 0.0, 0.7), (1.0, 9.0, 4.0)),
}


@dataclass(frozen=True)
class ExperimentPreset:
    id: int
    y0_table: tuple
    ydot0_table: tuple
    gains: ControllerGains
    params: PhysicalParams
    initial: SystemState


def make_initial(y0, ydot0, R=R0, omega=OMEGA0, x=X0, xdot=XDOT0) -> SystemState:
    """Initial state with ``y0`` put on the sphere and ``ydot0`` made tangent.

    A warning is logged when either correction changes the inputs.
    """
    y = np.asarray(y0, dtype=float)
    yd = np.asarray(ydot0, dtype=float)
    # values already on the manifold to rounding level are kept bit-for-bit
    off = norm(y) - 1.0
    if abs(off) > 1e-12:
        log.warning("y0 %s is off the unit sphere by %.3e; normalised", tuple(y.tolist()), off)
        y = y / norm(y)
    if abs(float(np.dot(y, yd))) > 1e-12:
        proj = tangent_project(y, yd)
        log.warning("ydot0 %s is not tangent at y0; projected (removed %.3e)", tuple(yd.tolist()),
                    float(np.linalg.norm(yd - proj)))
        yd = proj
    return SystemState(np.array(x, float), np.array(xdot, float), np.array(R, float), np.array(omega, float), y, yd)


def preset(pid: int, params: PhysicalParams | None = None) -> ExperimentPreset:
    if pid not in TABLE:
        raise KeyError(f"experiment must be one of 1..5, got {pid!r}")
    y0, yd0, K = TABLE[pid]
    params = params or PhysicalParams()
    return ExperimentPreset(pid, y0, yd0, ControllerGains(*K), params, make_initial(y0, yd0))
