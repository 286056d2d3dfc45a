"""Small SE(3)/SO(3) toolkit: hat/vee, exponential and logarithm maps, Jacobians.

Twists are ordered (v, w): translational part first, rotational part second.
"""

from __future__ import annotations

import numpy as np

_SMALL = 5e-2
_I3 = np.eye(3)
_I3.setflags(write=False)


def hat3(w):
    x, y, z = float(w[0]), float(w[1]), float(w[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def hat6(xi):
    X = np.zeros((4, 4))
    X[:3, :3] = hat3(xi[3:])
    X[:3, 3] = xi[:3]
    return X


def _coeffs(theta: float):
    """Series-safe coefficients used by exp/Jacobian formulas."""
    t2 = theta * theta
    if theta < _SMALL:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2**3 / 5040.0  # sin t / t
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2**3 / 40320.0  # (1 - cos t) / t^2
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2**3 / 362880.0  # (t - sin t) / t^3
    else:
        s, co = np.sin(theta), np.cos(theta)
        a = s / theta
        b = (1.0 - co) / t2
        c = (theta - s) / (t2 * theta)
    return a, b, c


def so3_exp(w):
    theta = float(np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]))
    a, b, _ = _coeffs(theta)
    W = hat3(w)
    return _I3 + a * W + b * (W @ W)


def so3_left_jacobian(w):
    theta = float(np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]))
    _, b, c = _coeffs(theta)
    W = hat3(w)
    return _I3 + b * W + c * (W @ W)


def so3_log(R):
    """Rotation vector of R. At angle pi any valid axis is returned."""
    v = vee3(R - R.T) / 2.0
    # atan2 keeps full precision near 0 and pi where arccos does not
    theta = float(np.arctan2(np.linalg.norm(v), (np.trace(R) - 1.0) / 2.0))
    if theta < 1e-6:
        # first-order, plus correction keeps antisymmetry exact
        return v * (1.0 + theta * theta / 6.0)
    if np.pi - theta < 1e-6:
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        # resolve sign with the antisymmetric part when it carries information
        if np.dot(v, axis) < 0.0:
            axis = -axis
        return theta * axis
    return theta / np.sin(theta) * v


def se3_exp(xi):
    xi = np.asarray(xi, dtype=float)
    w = xi[3:]
    T = np.eye(4)
    T[:3, :3] = so3_exp(w)
    T[:3, 3] = so3_left_jacobian(w) @ xi[:3]
    return T


def _q_matrix(rho, phi):
    """Coupling block of the SE(3) left Jacobian (Barfoot's Q)."""
    theta = float(np.linalg.norm(phi))
    P = hat3(phi)
    Rh = hat3(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    t2 = theta * theta
    if theta < _SMALL:
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        s, co = np.sin(theta), np.cos(theta)
        c1 = (theta - s) / theta**3
        c2 = (t2 + 2.0 * co - 2.0) / (2.0 * t2 * t2)
        c3 = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t2 * t2 * theta)
    return (
        0.5 * Rh
        + c1 * (PR + RP + PRP)
        + c2 * (P @ PR + RP @ P - 3.0 * PRP)
        + c3 * (PRP @ P + P @ PRP)
    )


def se3_left_jacobian(xi):
    xi = np.asarray(xi, dtype=float)
    J = np.zeros((6, 6))
    Jl = so3_left_jacobian(xi[3:])
    J[:3, :3] = Jl
    J[3:, 3:] = Jl
    J[:3, 3:] = _q_matrix(xi[:3], xi[3:])
    return J


def se3_right_jacobian(xi):
    """Body-frame derivative of exp: exp(xi)^-1 d exp(xi + e) = (J_r e)^ + O(e^2)."""
    return se3_left_jacobian(-np.asarray(xi, dtype=float))


def adjoint(T):
    """Adjoint of a rigid transform acting on (v, w) twists."""
    R = T[:3, :3]
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[3:, 3:] = R
    A[:3, 3:] = hat3(T[:3, 3]) @ R
    return A


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) < tol)
