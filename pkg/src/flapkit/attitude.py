"""Attitude algebra: unit quaternions, rotation matrices, reduced attitude.

Conventions
-----------
Quaternions are scalar-first, q = (eta, epsilon) with R(q) mapping body-frame
vectors into the inertial frame:

    R(q) = I + 2*eta*[eps]x + 2*[eps]x^2

The reduced attitude is the yaw-invariant unit vector Gamma = R(q)^T e3.  The
azimuth (vertical-frame) rotation is a plain rotation about inertial Z by psi,
wrapped to (-pi, pi].  A full attitude splits as R = Rz(psi) * R_e where R_e
is the tilt factor rebuilt from Gamma alone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAttitudeError, InconsistentDerivativeWarning, InvalidInputError

E3 = np.array([0.0, 0.0, 1.0])

UNIT_TOL = 1e-6
ANTIPODAL_TOL = 1e-6


@dataclass
class UnitQuaternion:
    """Scalar-first unit quaternion (eta, epsilon)."""

    eta: float
    epsilon: np.ndarray

    def __post_init__(self):
        self.epsilon = np.asarray(self.epsilon, dtype=float)
        if self.epsilon.shape != (3,):
            raise InvalidInputError("quaternion vector part must have shape (3,)")

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, np.zeros(3))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "UnitQuaternion":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0]), arr[1:4].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.eta], self.epsilon))

    def norm(self) -> float:
        return math.sqrt(self.eta**2 + float(self.epsilon @ self.epsilon))

    def normalized(self) -> "UnitQuaternion":
        n = self.norm()
        if n == 0.0:
            raise InvalidInputError("cannot normalize a zero quaternion")
        return UnitQuaternion(self.eta / n, self.epsilon / n)

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.eta, -self.epsilon)

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self (x) other."""
        eta = self.eta * other.eta - float(self.epsilon @ other.epsilon)
        eps = (
            self.eta * other.epsilon
            + other.eta * self.epsilon
            + np.cross(self.epsilon, other.epsilon)
        )
        return UnitQuaternion(eta, eps)


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def unskew(mat: np.ndarray) -> np.ndarray:
    """Vector of the antisymmetric part of ``mat``."""
    return np.array([mat[2, 1], mat[0, 2], mat[1, 0]])


def quat_to_rot(q: UnitQuaternion) -> np.ndarray:
    """Rotation matrix of a unit quaternion.

    Raises InvalidInputError when ``q`` deviates from unit norm by more
    than 1e-6.
    """
    if abs(q.norm() - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"quaternion norm {q.norm():.8f} is not 1")
    s = skew(q.epsilon)
    return np.eye(3) + 2.0 * q.eta * s + 2.0 * (s @ s)


def quat_derivative(q: UnitQuaternion, omega_body: np.ndarray) -> UnitQuaternion:
    """Kinematics qdot = 0.5 * q (x) (0, omega_body).  Not normalized."""
    omega_q = UnitQuaternion(0.0, np.asarray(omega_body, dtype=float))
    d = q.multiply(omega_q)
    return UnitQuaternion(0.5 * d.eta, 0.5 * d.epsilon)


def reduced_attitude(q: UnitQuaternion) -> np.ndarray:
    """Yaw-invariant reduced attitude Gamma = R(q)^T e3."""
    return quat_to_rot(q).T @ E3


def reduced_attitude_from_rot(rot: np.ndarray) -> np.ndarray:
    return np.asarray(rot, dtype=float).T @ E3


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.atan2(math.sin(angle), math.cos(angle))
    return math.pi if a <= -math.pi else a


def rotz(psi: float) -> np.ndarray:
    """Rotation about inertial Z by the azimuth angle psi."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def tilt_quaternion(gamma: np.ndarray, sign: int = 1) -> UnitQuaternion:
    """Zero-yaw quaternion whose reduced attitude equals ``gamma``.

    Built from the unnormalized pair s_e * [Gamma.e3 + 1, Gamma x e3]; both
    sign choices represent the same rotation.  Raises
    DegenerateAttitudeError when Gamma is antipodal to e3.
    """
    gamma = np.asarray(gamma, dtype=float)
    if abs(np.linalg.norm(gamma) - 1.0) > UNIT_TOL:
        raise InvalidInputError("reduced attitude must be a unit vector")
    if sign not in (1, -1):
        raise InvalidInputError("sign must be +1 or -1")
    w = float(gamma @ E3) + 1.0
    if w < ANTIPODAL_TOL:
        raise DegenerateAttitudeError("reduced attitude antipodal to +Z")
    q_er = UnitQuaternion(sign * w, sign * np.cross(gamma, E3))
    return q_er.normalized()


def recover_attitude(gamma: np.ndarray, psi: float, sign: int = 1) -> np.ndarray:
    """Full rotation matrix R = Rz(psi) * R(q_e) from reduced attitude and azimuth."""
    q_e = tilt_quaternion(gamma, sign)
    return rotz(psi) @ quat_to_rot(q_e)


def split_azimuth(rot: np.ndarray) -> tuple[float, np.ndarray]:
    """Split R into (psi, gamma) such that recover_attitude(gamma, psi) == R.

    Inverse of recover_attitude for non-antipodal attitudes.
    """
    rot = np.asarray(rot, dtype=float)
    gamma = rot.T @ E3
    r_e = quat_to_rot(tilt_quaternion(gamma))
    rz = rot @ r_e.T
    psi = math.atan2(rz[1, 0], rz[0, 0])
    return wrap_angle(psi), gamma


def angular_velocity_from_rotation(
    rot: np.ndarray, rot_dot: np.ndarray, sym_tol: float = 1e-6
) -> np.ndarray:
    """Extract omega from [omega]x = Rdot R^T.

    Warns when the symmetric part of Rdot R^T exceeds ``sym_tol``, which
    indicates Rdot is not a consistent derivative of R.
    """
    w_mat = np.asarray(rot_dot, dtype=float) @ np.asarray(rot, dtype=float).T
    sym = 0.5 * (w_mat + w_mat.T)
    if np.max(np.abs(sym)) > sym_tol:
        warnings.warn(
            f"symmetric part of Rdot R^T reaches {np.max(np.abs(sym)):.2e}",
            InconsistentDerivativeWarning,
            stacklevel=2,
        )
    anti = 0.5 * (w_mat - w_mat.T)
    return unskew(anti)
