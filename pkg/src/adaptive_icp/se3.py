"""Rigid-body transform algebra shared by both registration stages.

Poses are kept as an explicit rotation matrix plus translation vector.
Twists use the (rotational, translational) block order throughout, matching
the Jacobian layout of the registration solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AngleNearPiError, SingularSystemError

# Below this angle the Rodrigues coefficients switch to their Taylor series.
_SMALL_ANGLE = 1e-8
# Orthonormality drift tolerated before compose() re-projects the rotation.
_ORTHO_DRIFT = 1e-9


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return Pose(T[:3, :3].copy(), T[:3, 3].copy())


@dataclass(frozen=True)
class Twist:
    """Lie-algebra increment: axis-angle rotation part plus translation part."""

    rot_part: np.ndarray
    trans_part: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot_part", np.asarray(self.rot_part, dtype=np.float64).reshape(3))
        object.__setattr__(self, "trans_part", np.asarray(self.trans_part, dtype=np.float64).reshape(3))

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return Twist(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rot_part, self.trans_part])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_vector()))


@dataclass(frozen=True)
class NormalEquations:
    """Accumulated 6x6 system H @ dx = b."""

    hessian: np.ndarray
    gradient: np.ndarray


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix S(v) with S(v) @ w = v x w."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _rodrigues_terms(rot_vec: np.ndarray):
    """Rotation matrix and left Jacobian of an axis-angle vector."""
    theta = float(np.linalg.norm(rot_vec))
    S = skew(rot_vec)
    S2 = S @ S
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
        c = 1.0 / 6.0 - theta**2 / 120.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
        c = (theta - np.sin(theta)) / theta**3
    R = np.eye(3) + a * S + b * S2
    J = np.eye(3) + b * S + c * S2
    return R, J


def exp_map(xi: Twist) -> Pose:
    """Exponential map from a twist to a rigid transform.

    The rotation follows the Rodrigues formula; the translation goes through
    the left Jacobian, so the map is exact for arbitrarily large increments.
    """
    R, J = _rodrigues_terms(xi.rot_part)
    return Pose(R, J @ xi.trans_part)


def log_map(T: Pose) -> Twist:
    """Inverse of exp_map. Raises AngleNearPiError when the axis is ambiguous."""
    R = T.rotation
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    # atan2 of (sin, cos) recovered from the matrix stays well-conditioned
    # near pi, where acos of the trace loses ~1/sin(theta) digits
    sin_theta = float(np.linalg.norm(vee))
    cos_theta = (float(np.trace(R)) - 1.0) / 2.0
    theta = float(np.arctan2(sin_theta, cos_theta))
    if theta >= np.pi - 1e-6:
        raise AngleNearPiError(f"rotation angle {theta:.9f} too close to pi")
    if theta < _SMALL_ANGLE:
        rot_vec = vee * (1.0 + theta**2 / 6.0)
    else:
        rot_vec = vee * theta / sin_theta
    S = skew(rot_vec)
    S2 = S @ S
    if theta < _SMALL_ANGLE:
        e = 1.0 / 12.0 + theta**2 / 720.0
    else:
        e = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta**2
    J_inv = np.eye(3) - 0.5 * S + e * S2
    return Twist(rot_vec, J_inv @ T.translation)


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle in [0, pi]; the acos argument is clamped against
    floating-point trace overshoot."""
    cos_theta = (float(np.trace(R)) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos_theta, -1.0, 1.0)))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest orthonormal matrix (polar projection), det fixed to +1."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U = U.copy()
        U[:, -1] *= -1.0
        Q = U @ Vt
    return Q


def compose(A: Pose, B: Pose) -> Pose:
    """A then B applied from the right: result maps p to A(B(p))."""
    R = A.rotation @ B.rotation
    if np.linalg.norm(R.T @ R - np.eye(3)) > _ORTHO_DRIFT:
        R = orthonormalize(R)
    return Pose(R, A.rotation @ B.translation + A.translation)


def inverse(A: Pose) -> Pose:
    Rt = A.rotation.T
    return Pose(Rt, -Rt @ A.translation)


def apply(A: Pose, p: np.ndarray) -> np.ndarray:
    """Transform a single 3-vector."""
    return A.rotation @ np.asarray(p, dtype=np.float64).reshape(3) + A.translation


def transform_points(A: Pose, points: np.ndarray) -> np.ndarray:
    """Transform an (n, 3) array of points."""
    return points @ A.rotation.T + A.translation


def solve_damped(ne: NormalEquations, lam: float) -> Twist:
    """Solve (H + lam*I) dx = b.

    Raises SingularSystemError when the damped matrix is conditioned worse
    than 1e12; callers treat that as a non-improving iteration.
    """
    H = ne.hessian + lam * np.eye(6)
    if np.linalg.cond(H) > 1e12:
        raise SingularSystemError("damped normal equations condition number above 1e12")
    return Twist.from_vector(np.linalg.solve(H, ne.gradient))
