"""Trajectory CSV and run-summary JSON."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .lyapunov import monitor

_AX = ("1", "2", "3")

COLUMNS = (
    ("t",)
    + tuple(f"x{i}" for i in _AX)
    + tuple(f"xdot{i}" for i in _AX)
    + tuple(f"R{i}{j}" for i in _AX for j in _AX)
    + tuple(f"omega{i}" for i in _AX)
    + tuple(f"y{i}" for i in _AX)
    + tuple(f"ydot{i}" for i in _AX)
    + ("f",)
    + tuple(f"mu{i}" for i in _AX)
    + tuple(f"thrust{i}" for i in ("1", "2", "3", "4"))
    + ("V1", "V2", "V", "e3_dot_y", "e3_dot_z")
)


def trajectory_table(log) -> np.ndarray:
    """Stack the logged quantities into one row per tick in :data:`COLUMNS` order."""
    n = len(log)
    return np.column_stack(
        [
            log.t,
            log.x,
            log.xdot,
            np.asarray(log.R).reshape(n, 9),
            log.omega,
            log.y,
            log.ydot,
            log.f,
            log.mu,
            log.rotor_thrusts,
            log.V1,
            log.V2,
            log.V,
            log.e3_dot_y,
            log.e3_dot_z,
        ]
    )


def _fmt(v: float) -> str:
    # 17 significant digits round-trip every double
    return "%.17g" % v


def write_trajectory(log, path):
    """Write ``log`` as CSV; identical logs give identical bytes."""
    table = trajectory_table(log)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in table.tolist():
            fh.write(",".join(map(_fmt, row)) + "\n")


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    """Header and data of a CSV written by :func:`write_trajectory`."""
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


@dataclass(frozen=True)
class RunSummary:
    """Scalar outcome of a run.

    Attributes:
        final_e3_dot_y, final_e3_dot_z: last-coordinate alignment at ``t_end``.
        V0, V_end: Lyapunov value at start and end.
        max_positive_dV: largest finite-difference ``dV/dt`` over the run.
        max_drift_y, max_drift_R: largest pre-projection manifold drift.
        wall_time: seconds spent integrating.
        decrease: the full :class:`quadpend.lyapunov.DecreaseReport`.
    """

    final_e3_dot_y: float
    final_e3_dot_z: float
    V0: float
    V_end: float
    max_positive_dV: float
    max_drift_y: float
    max_drift_R: float
    wall_time: float
    t_end: float
    steps: int
    experiment: int | None = None
    decrease: dict | None = None

    def __post_init__(self):
        vals = dict(asdict(self))
        vals.update({f"decrease.{k}": v for k, v in (self.decrease or {}).items()})
        for key, val in vals.items():
            if isinstance(val, float) and not math.isfinite(val):
                raise ValueError(f"{key}: summary field is not finite ({val!r})")

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(log, experiment: int | None = None) -> RunSummary:
    rep = monitor(log)
    return RunSummary(
        final_e3_dot_y=float(log.e3_dot_y[-1]),
        final_e3_dot_z=float(log.e3_dot_z[-1]),
        V0=rep.V0,
        V_end=rep.V_end,
        max_positive_dV=rep.max_positive_dV,
        max_drift_y=float(np.max(log.drift_y)),
        max_drift_R=float(np.max(log.drift_R)),
        wall_time=float(log.wall_time),
        t_end=float(log.t[-1]),
        steps=len(log) - 1,
        experiment=experiment,
        decrease=rep.as_dict(),
    )


def write_summary(summaries, path):
    """Write one summary or a list of them as JSON."""
    if isinstance(summaries, RunSummary):
        doc = summaries.as_dict()
    else:
        doc = [s.as_dict() for s in summaries]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
