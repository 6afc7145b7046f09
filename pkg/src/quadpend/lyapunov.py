"""Lyapunov functions of the closed loop and a numerical decrease monitor."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geom import cross, dot


def v1(y, ydot, k_p: float) -> float:
    """Pendulum energy ``k_p (1 - y.e3) + |y'|^2 / 2``."""
    return float(k_p * (1.0 - y[2]) + 0.5 * dot(ydot, ydot))


def v2(z, zdot, z_d, zd_dot, k1: float) -> float:
    """Thrust-axis tracking energy ``k1 (1 - z.z_d) + |v_e|^2 / 2``."""
    v_e = zdot - cross(cross(z_d, zd_dot), z)
    return float(k1 * (1.0 - dot(z, z_d)) + 0.5 * dot(v_e, v_e))


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    V1: float
    V2: float
    V: float
    dV_fd: float


@dataclass(frozen=True)
class DecreaseReport:
    """Summary of how well ``V = V1 + V2`` decreases along a run.

    Attributes:
        V0, V_end: first and last values of ``V``.
        max_positive_dV: largest finite-difference ``dV/dt`` (0 if never positive).
        t_max_positive_dV: time at which it occurs.
        positive_fraction: fraction of samples with ``dV/dt > 0``.
        max_analytic_residual: ``max |dV_fd - (-k_d |y'|^2 - k2 |v_e|^2)|``.
        max_exact_residual: ``max |dV_fd - rate_terms(log)["total"]|``.
        max_compatibility_residual: ``max |d/dt[k1 (1 - z.z_d)] - <k1 hat(z)^2 z_d, v_e>|``.
    """

    V0: float
    V_end: float
    max_positive_dV: float
    t_max_positive_dV: float
    positive_fraction: float
    max_analytic_residual: float
    max_exact_residual: float
    max_compatibility_residual: float

    def as_dict(self):
        return asdict(self)


def finite_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, second-order one-sided stencils at the ends."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return np.zeros_like(values)
    return np.gradient(values, dt, edge_order=2)


def samples(log) -> list[LyapunovSample]:
    dV = finite_difference(log.V, log.dt)
    return [LyapunovSample(float(t), float(a), float(b), float(a + b), float(d))
            for t, a, b, d in zip(log.t, log.V1, log.V2, dV)]


def rate_terms(log) -> dict:
    """Exact decomposition of ``dV/dt`` along a logged closed-loop run.

    Differentiating ``V1 + V2`` along the dynamics gives the sum of

    * ``damping``:  ``s k_d |y'|^2`` (``s`` the law's damping sign),
    * ``tracking``: ``-k2 |v_e|^2``,
    * ``coupling``: ``|f_p| <y', z - z_d>`` from the thrust-axis error,
    * ``beta``:     ``<beta, v_e>``,
    * ``gain_drift``: ``k_p' (1 - y.e3)`` from the state-dependent stiffness.

    The proof-level rate ``-k_d |y'|^2 - k2 |v_e|^2`` assumes the last three
    cancel; this function shows by how much they do not.
    """
    params, gains = log.params, log.gains
    sign = getattr(log.law, "damping_sign", -1.0)
    Ml = params.M * params.l
    C = (params.M + params.m) * params.g / Ml
    y, ydot = np.asarray(log.y), np.asarray(log.ydot)
    z, z_d = np.asarray(log.z), np.asarray(log.z_d)
    v_e, beta = np.asarray(log.v_e), np.asarray(log.beta)
    f = np.asarray(log.f)
    n = -f / Ml

    def rowdot(a, b):
        return np.einsum("ij,ij->i", a, b)

    yz = rowdot(y, z)
    yddot = -rowdot(ydot, ydot)[:, None] * y + (f / Ml)[:, None] * (yz[:, None] * y - z)
    s = np.sqrt(rowdot(ydot, ydot))
    s_d = np.where(s > 1e-12, rowdot(ydot, yddot) / np.where(s > 1e-12, s, 1.0), np.sqrt(rowdot(yddot, yddot)))
    kp_d = -C * s_d / (1.0 + s) ** 2
    terms = {
        "damping": sign * gains.k_d * s * s,
        "tracking": -gains.k2 * rowdot(v_e, v_e),
        "coupling": n * rowdot(ydot, z - z_d),
        "beta": rowdot(beta, v_e),
        "gain_drift": kp_d * (1.0 - y[:, 2]),
    }
    terms["total"] = sum(terms.values())
    return terms


def monitor(log) -> DecreaseReport:
    """Finite-difference decrease check over a trajectory log.

    ``log`` is a :class:`quadpend.integrator.TrajectoryLog` (any object with
    the same array attributes works).
    """
    V = np.asarray(log.V)
    dV = finite_difference(V, log.dt)
    gains = log.gains
    ydot = np.asarray(log.ydot)
    v_e = np.asarray(log.v_e)
    analytic = -gains.k_d * np.einsum("ij,ij->i", ydot, ydot) - gains.k2 * np.einsum("ij,ij->i", v_e, v_e)

    z = np.asarray(log.z)
    z_d = np.asarray(log.z_d)
    zz = np.einsum("ij,ij->i", z, z_d)
    potential_rate = finite_difference(gains.k1 * (1.0 - zz), log.dt)
    # hat(z)^2 z_d = (z.z_d) z - z_d for unit z
    grad = gains.k1 * (zz[:, None] * z - z_d)
    compat = np.einsum("ij,ij->i", grad, v_e)

    k = int(np.argmax(dV)) if dV.size else 0
    maxpos = float(max(dV[k], 0.0)) if dV.size else 0.0
    return DecreaseReport(
        V0=float(V[0]),
        V_end=float(V[-1]),
        max_positive_dV=maxpos,
        t_max_positive_dV=float(log.t[k]) if dV.size else 0.0,
        positive_fraction=float(np.mean(dV > 0.0)) if dV.size else 0.0,
        max_analytic_residual=float(np.max(np.abs(dV - analytic))) if dV.size else 0.0,
        max_exact_residual=float(np.max(np.abs(dV - rate_terms(log)["total"]))) if dV.size else 0.0,
        max_compatibility_residual=float(np.max(np.abs(potential_rate - compat))) if dV.size else 0.0,
    )
