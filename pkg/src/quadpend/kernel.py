"""Compiled closed-loop RK4 step used by :func:`quadpend.integrator.simulate`.

This is the same control law and dynamics as :mod:`quadpend.controller` and
:mod:`quadpend.dynamics`, flattened onto scalar/array code that numba can
compile. The reference modules remain the source of truth; the test suite
checks agreement between the two to rounding level. Without numba the
functions run as ordinary Python.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


BETA_MODES = {"off": 0, "transport": 1, "min_norm": 2}


@njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _exp(v):
    t2 = _dot(v, v)
    K = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    K2 = K @ K
    if t2 < 1e-12:
        return np.eye(3) + K + 0.5 * K2
    t = math.sqrt(t2)
    return np.eye(3) + (math.sin(t) / t) * K + ((1.0 - math.cos(t)) / t2) * K2


@njit(cache=True)
def _dexp_inv(th, w):
    t2 = _dot(th, th)
    if t2 < 1e-8:
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        t = math.sqrt(t2)
        c = 1.0 / t2 - (1.0 + math.cos(t)) / (2.0 * t * math.sin(t))
    tw = _cross(th, w)
    return w + 0.5 * tw + c * _cross(th, tw)


@njit(cache=True)
def control(R, w, y, yd, p, J, Jinv):
    """Thrust and moment of the analytic-rate law.

    ``p = (M, m, l, g, signed k_d, k1, k2, beta mode, beta sign)``.
    """
    M, m, l, g = p[0], p[1], p[2], p[3]
    kd, k1, k2 = p[4], p[5], p[6]
    mode, bsign = p[7], p[8]
    e3 = np.array([0.0, 0.0, 1.0])
    Ml = M * l
    C = (M + m) * g / Ml

    z = R[:, 2].copy()
    we3 = _cross(w, e3)
    zdot = R @ we3

    s = math.sqrt(_dot(yd, yd))
    kp = C / (1.0 + s)
    fp = kp * e3 + kd * yd
    n = math.sqrt(_dot(fp, fp))
    zd = fp / n
    f = -Ml * n

    yz = _dot(y, z)
    ydd = -s * s * y + (f / Ml) * (yz * y - z)
    a = math.sqrt(_dot(ydd, ydd))
    yy = _dot(yd, ydd)
    s_d = yy / s if s > 1e-12 else a
    kp_d = -C * s_d / (1.0 + s) ** 2
    fp_d = kp_d * e3 + kd * ydd
    n_d = _dot(zd, fp_d)
    zd_dot = (fp_d - n_d * zd) / n
    f_d = -Ml * n_d
    y3 = (
        -2.0 * yy * y
        - s * s * yd
        + (f_d / Ml) * (yz * y - z)
        + (f / Ml) * (yz * yd + (_dot(yd, z) + _dot(y, zdot)) * y - zdot)
    )
    if s > 1e-12:
        s_dd = (a * a + _dot(yd, y3)) / s - yy * yy / s**3
    elif a > 0.0:
        s_dd = _dot(ydd, y3) / a
    else:
        s_dd = 0.0
    kp_dd = -C * s_dd / (1.0 + s) ** 2 + 2.0 * C * s_d * s_d / (1.0 + s) ** 3
    fp_dd = kp_dd * e3 + kd * y3
    n_dd = _dot(zd_dot, fp_d) + _dot(zd, fp_dd)
    zd_ddot = (fp_dd - 2.0 * n_d * zd_dot - n_dd * zd) / n

    wd_ = _cross(zd, zd_dot)
    v_e = zdot - _cross(wd_, z)
    err = z - zd
    if mode == 1:
        # A^T err for A = <y,z> I - z y^T
        At_e = yz * err - y * _dot(z, err)
        beta = bsign * (-n) * At_e
    elif mode == 2:
        vv = _dot(v_e, v_e)
        if vv > 0.0:
            beta = bsign * (-n) * v_e * (_dot(yd, err) / vv)
        else:
            beta = np.zeros(3)
    else:
        beta = np.zeros(3)

    zz = _dot(z, z)
    Z2zd = _dot(z, zd) * z - zz * zd
    Z2b = _dot(z, beta) * z - zz * beta
    ff = _dot(z, wd_) * _cross(z, zdot) + _cross(_cross(zd, zd_ddot), z)
    u_fb = -k1 * Z2zd - k2 * v_e + ff - Z2b

    b = Jinv @ _cross(J @ w, w)
    r = _cross(w, we3) + _cross(b, e3) + R.T @ (_dot(zdot, zdot) * z - u_fb)
    mu = J @ _cross(e3, r)
    return f, mu


@njit(cache=True)
def _accel(R, w, y, yd, f, mu, p, J, Jinv):
    M, m, l, g = p[0], p[1], p[2], p[3]
    z = R[:, 2].copy()
    ydd = -_dot(yd, yd) * y + (f / (M * l)) * (_dot(y, z) * y - z)
    xdd = (f * z - m * l * ydd) / (M + m)
    xdd[2] += g
    wd = Jinv @ (_cross(J @ w, w) - mu)
    return xdd, wd, ydd


@njit(cache=True)
def rk4(x, xd, R, w, y, yd, dt, f0, mu0, hold, p, J, Jinv):
    """One closed-loop RK4/RKMK step; stage 1 uses ``(f0, mu0)``.

    With ``hold`` the stage-1 input is kept for all stages.
    """
    cs = (0.0, 0.5, 0.5, 1.0)
    wts = (1.0, 2.0, 2.0, 1.0)
    ax = np.zeros(3)
    axd = np.zeros(3)
    ath = np.zeros(3)
    aw = np.zeros(3)
    ay = np.zeros(3)
    ayd = np.zeros(3)
    kx = np.zeros(3)
    kxd = np.zeros(3)
    kth = np.zeros(3)
    kw = np.zeros(3)
    ky = np.zeros(3)
    kyd = np.zeros(3)
    for i in range(4):
        h = cs[i] * dt
        th = h * kth
        sx = x + h * kx
        sxd = xd + h * kxd
        sR = R @ _exp(th) if i > 0 else R.copy()
        sw = w + h * kw
        sy = y + h * ky
        syd = yd + h * kyd
        if i == 0 or hold:
            f, mu = f0, mu0
        else:
            f, mu = control(sR, sw, sy, syd, p, J, Jinv)
        xdd, wd, ydd = _accel(sR, sw, sy, syd, f, mu, p, J, Jinv)
        kx = sxd
        kxd = xdd
        kth = _dexp_inv(th, sw)
        kw = wd
        ky = syd
        kyd = ydd
        ax += wts[i] * kx
        axd += wts[i] * kxd
        ath += wts[i] * kth
        aw += wts[i] * kw
        ay += wts[i] * ky
        ayd += wts[i] * kyd
    c = dt / 6.0
    return x + c * ax, xd + c * axd, R @ _exp(c * ath), w + c * aw, y + c * ay, yd + c * ayd


def pack(gains, params, law):
    p = np.array(
        [
            params.M,
            params.m,
            params.l,
            params.g,
            law.damping_sign * gains.k_d,
            gains.k1,
            gains.k2,
            float(BETA_MODES[law.beta_mode]),
            law.beta_sign,
        ]
    )
    return p, np.ascontiguousarray(params.inertia), np.ascontiguousarray(params.inertia_inv)


@njit(cache=True)
def project(R, y, yd):
    """Renormalise ``y``, make ``yd`` tangent and take the polar factor of ``R``."""
    y = y / math.sqrt(_dot(y, y))
    yd = yd - _dot(y, yd) * y
    E = R.T @ R - np.eye(3)
    if math.sqrt(np.sum(E * E)) > 1e-14:
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
    return R, y, yd


@njit(cache=True)
def run(x, xd, R, w, y, yd, dt, n, p, J, Jinv, hold=False, f0=0.0, mu0=np.zeros(3)):
    """``n`` steps with projection; returns the final state only.

    Closed loop by default; with ``hold`` the input ``(f0, mu0)`` is applied
    throughout instead.
    """
    for _ in range(n):
        if hold:
            f, mu = f0, mu0
        else:
            f, mu = control(R, w, y, yd, p, J, Jinv)
        x, xd, R, w, y, yd = rk4(x, xd, R, w, y, yd, dt, f, mu, hold, p, J, Jinv)
        R, y, yd = project(R, y, yd)
    return x, xd, R, w, y, yd
