"""Rigid transforms, pinhole projection and pose error metrics.

Conventions used throughout the package:

* A :class:`Transform` maps points from a source frame into a target frame,
  ``p_target = R @ p_source + d``.  Rotations are kept as orthonormal 3x3
  matrices; the displacement is the origin of the source frame expressed in
  the target frame.
* Image coordinates are ``(u, v)`` pixels, u along the sensor row axis,
  v along the column axis, origin at the top-left pixel center.
* The camera looks along +z; points with z <= 0 cannot be projected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-9


class PointBehindCamera(ValueError):
    """Raised when a point with non-positive depth is projected."""


def _as_rotation(rotation: np.ndarray) -> np.ndarray:
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if np.linalg.norm(r.T @ r - np.eye(3)) > ORTHONORMAL_TOL or np.linalg.det(r) < 0:
        raise ValueError("rotation matrix is not orthonormal (det +1) within 1e-9")
    return r


@dataclass(frozen=True)
class Transform:
    """Rigid transform: ``p_target = rotation @ p_source + displacement``."""

    rotation: np.ndarray
    displacement: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        d = np.asarray(self.displacement, dtype=float).reshape(3)
        object.__setattr__(self, "displacement", d)

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack of points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.displacement

    def inverse(self) -> "Transform":
        rt = self.rotation.T
        return Transform(rt, -rt @ self.displacement)

    def compose(self, other: "Transform") -> "Transform":
        """Return self ∘ other, i.e. apply ``other`` first."""
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.displacement + self.displacement,
        )

    def as_flat(self) -> np.ndarray:
        """12 floats: row-major rotation then displacement (serialization order)."""
        return np.concatenate([self.rotation.reshape(9), self.displacement])

    @staticmethod
    def from_flat(values) -> "Transform":
        v = np.asarray(values, dtype=float).reshape(12)
        return Transform(v[:9].reshape(3, 3), v[9:])


def compose(a: Transform, b: Transform) -> Transform:
    """Functional alias for ``a.compose(b)``."""
    return a.compose(b)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model without lens distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def project(k: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project camera-frame points to pixel coordinates.

    Accepts a single (3,) point or an (n, 3) stack; raises
    :class:`PointBehindCamera` if any depth is <= 0.  Points outside the
    sensor bounds are returned as-is; visibility is the caller's concern.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 0):
        raise PointBehindCamera("cannot project point(s) with z <= 0")
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = k.fx * p[:, 0] / z + k.cx
    uv[:, 1] = k.fy * p[:, 1] / z + k.cy
    return uv[0] if single else uv


def normalized_coords(k: CameraIntrinsics, pixels: np.ndarray) -> np.ndarray:
    """Pixel coordinates -> normalized image coordinates (x/z, y/z)."""
    uv = np.atleast_2d(np.asarray(pixels, dtype=float))
    out = np.empty_like(uv)
    out[:, 0] = (uv[:, 0] - k.cx) / k.fx
    out[:, 1] = (uv[:, 1] - k.cy) / k.fy
    return out


def skew(w) -> np.ndarray:
    """Cross-product matrix: skew(w) @ v == np.cross(w, v)."""
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues exponential: axis-angle vector -> rotation matrix."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        # second-order series keeps the result orthonormal to machine precision
        k = skew(w)
        return np.eye(3) + k + 0.5 * (k @ k)
    k = skew(w / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation matrix -> axis-angle vector (angle in [0, pi])."""
    r = np.asarray(r, dtype=float)
    axial = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(axial)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = np.arctan2(s, c)
    if s > 1e-7:
        return axial * (theta / s)
    if c > 0:
        # small angle: axial already equals sin(theta) * axis ~ theta * axis
        return axial
    # theta near pi: recover the axis from the symmetric part of r
    sym = 0.5 * (r + r.T)
    a = np.sqrt(np.maximum((np.diag(sym) - c) / (1.0 - c), 0.0))
    i = int(np.argmax(a))
    for j in range(3):
        if j != i:
            a[j] = sym[i, j] / ((1.0 - c) * a[i])
    return theta * a / np.linalg.norm(a)


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle_deg(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, degrees, robust for small angles."""
    r = np.asarray(r, dtype=float)
    axial = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(axial)
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.degrees(np.arctan2(s, c)))


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for reporting; w >= 0."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + r[i, i] - r[j, j] - r[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class PoseError:
    """Difference between an estimated and a ground-truth transform."""

    translation_error: np.ndarray  # d_gt - d_est, meters
    orientation_error_deg: float  # geodesic angle between the rotations

    @property
    def translation_norm(self) -> float:
        return float(np.linalg.norm(self.translation_error))


def pose_error(estimate: Transform, truth: Transform) -> PoseError:
    """Translation difference and geodesic orientation angle between poses."""
    e_t = truth.displacement - estimate.displacement
    theta = rotation_angle_deg(estimate.rotation.T @ truth.rotation)
    return PoseError(translation_error=e_t, orientation_error_deg=theta)
