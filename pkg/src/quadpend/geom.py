"""Small coordinate-free geometry kernel for R^3, S^2 and SO(3).

Everything here works on plain ``numpy`` arrays of shape (3,) or (3, 3).
The helpers are written out component-wise because they sit on the inner
loop of the closed-loop simulation and ``np.cross`` is slow on 3-vectors.
"""

from __future__ import annotations

import math

import numpy as np

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
I3 = np.eye(3)

SKEW_TOL = 1e-9
TANGENT_TOL = 1e-9
SMALL_ANGLE = 1e-6
RANK_RTOL = 1e-10


class GeometryError(ValueError):
    """Base class for violated geometric preconditions."""


class NotSkew(GeometryError):
    pass


class NotTangent(GeometryError):
    pass


class DegenerateFrame(GeometryError):
    pass


def _components(a):
    try:
        return a.tolist()
    except AttributeError:
        return [float(v) for v in a]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a0, a1, a2 = _components(a)
    b0, b1, b2 = _components(b)
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def dot(a: np.ndarray, b: np.ndarray) -> float:
    a0, a1, a2 = _components(a)
    b0, b1, b2 = _components(b)
    return a0 * b0 + a1 * b1 + a2 * b2


def norm(a: np.ndarray) -> float:
    return math.sqrt(dot(a, a))


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(v) @ w == v x w``."""
    x, y, z = _components(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(M: np.ndarray, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`hat`.

    Raises:
        NotSkew: if the symmetric part of ``M`` exceeds ``tol`` (max-abs).
    """
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    if np.max(np.abs(sym)) > tol:
        raise NotSkew(f"matrix is not skew-symmetric (|sym| = {np.max(np.abs(sym)):.3e})")
    return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]]) * 0.5


def hat_sq(v: np.ndarray) -> np.ndarray:
    """``hat(v) @ hat(v)``; equals ``v v^T - I`` for unit ``v``."""
    return np.outer(v, v) - dot(v, v) * I3


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula for the exponential map so(3) -> SO(3)."""
    theta2 = dot(v, v)
    K = hat(v)
    if theta2 < SMALL_ANGLE * SMALL_ANGLE:
        return I3 + K + 0.5 * (K @ K)
    theta = math.sqrt(theta2)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / theta2
    return I3 + a * K + b * (K @ K)


def dexp_inv(theta: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian of SO(3) applied to ``w``.

    If ``R(t) = R0 exp(theta(t))`` has body rate ``w`` then
    ``theta' = dexp_inv(theta, w)``.
    """
    t2 = dot(theta, theta)
    if t2 < 1e-8:
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        t = math.sqrt(t2)
        c = 1.0 / t2 - (1.0 + math.cos(t)) / (2.0 * t * math.sin(t))
    tw = cross(theta, w)
    return w + 0.5 * tw + c * cross(theta, tw)


def is_rotation(R: np.ndarray, tol: float = 1e-8) -> bool:
    return bool(np.linalg.norm(R.T @ R - I3) <= tol and np.linalg.det(R) > 0.0)


def orthonormalize(M: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``M`` in the Frobenius norm (polar factor).

    Raises:
        DegenerateFrame: if ``det M <= 0`` or ``M`` is far from orthogonal.
    """
    M = np.asarray(M, dtype=float)
    if np.linalg.det(M) <= 0.0 or np.linalg.norm(M.T @ M - I3) > 1e-3:
        raise DegenerateFrame("matrix is too far from SO(3) to repair")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def tangent_project(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Component of ``v`` tangent to the sphere at unit vector ``p``."""
    return v - dot(p, v) * p


def _check_tangent(p, v, name):
    if abs(dot(p, v)) > TANGENT_TOL * max(1.0, norm(v)):
        raise NotTangent(f"{name} is not tangent to its base point (<p, v> = {dot(p, v):.3e})")


def transport_matrix(phi: np.ndarray, phi_d: np.ndarray) -> np.ndarray:
    """Matrix of ``v -> (phi_d x v) x phi``, i.e. ``<phi, phi_d> I - phi_d phi^T``."""
    return dot(phi, phi_d) * I3 - np.outer(phi_d, phi)


def transport(phi: np.ndarray, phi_d: np.ndarray, vd: np.ndarray) -> np.ndarray:
    """Carry ``vd`` in T_{phi_d} S^2 to T_{phi} S^2 via ``(phi_d x vd) x phi``."""
    _check_tangent(phi_d, vd, "vd")
    return cross(cross(phi_d, vd), phi)


def feedforward(phi, dphi, phi_d, dphi_d, ddphi_d) -> np.ndarray:
    """Covariant derivative along ``phi`` of the transported reference velocity.

    Evaluates ``<phi, phi_d x dphi_d> (phi x dphi) + (phi_d x ddphi_d) x phi``,
    which is the tangential part of ``d/dt [(phi_d x dphi_d) x phi]``.
    """
    _check_tangent(phi, dphi, "dphi")
    _check_tangent(phi_d, dphi_d, "dphi_d")
    w = cross(phi_d, dphi_d)
    return dot(phi, w) * cross(phi, dphi) + cross(cross(phi_d, ddphi_d), phi)


def min_norm_lsq(A: np.ndarray, b: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A x = b``.

    Singular values below ``rtol * sigma_max`` are treated as zero, so the
    rank-2 transport matrices that show up in the controller are handled
    without special casing.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[1])
    keep = s > rtol * s[0]
    coef = (U[:, keep].T @ b) / s[keep]
    return Vt[keep].T @ coef
