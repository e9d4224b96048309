"""Shared numeric primitives: images, camera geometry, angular metrics, statistics.

Coordinate conventions (fixed for the whole package):
  device frame   right-handed, millimeters, +z out of the face toward the
                 gaze targets, +y up.
  camera frame   +z forward along the optical axis, +x right in the image,
                 +y down (pixel v grows downward).
  pose           x_cam = rotation @ x_device + translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateSeriesError,
    ValidationError,
)

_MIN_Z_MM = 1e-9


@dataclass
class LinearImage:
    """Linear-irradiance raster, float32, row-major (height, width).

    Values are dimensionless linear light, nominally displayed in [0, 1] but
    unbounded above until quantization. validate() enforces the value-domain
    invariant; intermediate pipeline stages (noise) legitimately bypass it.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValidationError("LinearImage expects a 2-D array")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def validate(self) -> "LinearImage":
        if not np.isfinite(self.values).all():
            raise ValidationError("LinearImage contains non-finite values")
        if (self.values < 0).any():
            raise ValidationError("LinearImage contains negative values")
        return self

    def copy(self) -> "LinearImage":
        return LinearImage(self.values.copy())


@dataclass
class QuantizedImage:
    """8-bit sensor output, row-major (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.ndim != 2:
            raise ValidationError("QuantizedImage expects a 2-D array")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class CameraIntrinsics:
    """Pinhole intrinsics; fx == fy is the swept focal-length parameter."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def validate(self) -> "CameraIntrinsics":
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point outside the sensor")
        return self

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"]).validate()


@dataclass
class CameraPose:
    """Rigid device-to-camera transform. rotation is 3x3, translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)

    def validate(self, tol: float = 1e-9) -> "CameraPose":
        r = self.rotation
        if r.shape != (3, 3) or self.translation.shape != (3,):
            raise ValidationError("pose must be 3x3 rotation + 3-vector translation")
        if not np.allclose(r.T @ r, np.eye(3), atol=tol):
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise ValidationError("rotation determinant is not +1")
        return self

    @property
    def camera_origin(self) -> np.ndarray:
        """Camera center of projection in device coordinates."""
        return -(self.rotation.T @ self.translation)

    @classmethod
    def look_at(cls, position, target, up=(0.0, 1.0, 0.0)) -> "CameraPose":
        """Pose for a camera at `position` aimed at `target`, image-up along `up`."""
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise ValidationError("look_at target coincides with camera position")
        z_c = forward / norm
        down = -np.asarray(up, dtype=np.float64)
        x_c = np.cross(down, z_c)
        nx = np.linalg.norm(x_c)
        if nx < 1e-9:
            raise ValidationError("look_at direction parallel to up vector")
        x_c = x_c / nx
        y_c = np.cross(z_c, x_c)
        rot = np.stack([x_c, y_c, z_c])
        return cls(rot, -(rot @ position))

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.array(d["rotation"]), np.array(d["translation"])).validate()


@dataclass
class GazeSample:
    """Ground-truth visual-axis direction for one frame."""

    gaze: np.ndarray
    target_index: int
    identity_id: str = ""

    def __post_init__(self):
        self.gaze = np.asarray(self.gaze, dtype=np.float64)

    def validate(self, target_count: int = 114, half_fov_deg: float = 35.0) -> "GazeSample":
        if abs(np.linalg.norm(self.gaze) - 1.0) > 1e-9:
            raise ValidationError("gaze vector is not unit length")
        if not (0 <= self.target_index < target_count):
            raise ValidationError(f"target_index outside [0,{target_count})")
        pitch, yaw = gaze_to_pitch_yaw(self.gaze)
        if abs(pitch) > half_fov_deg + 1e-9 or abs(yaw) > half_fov_deg + 1e-9:
            raise ValidationError("gaze outside the supported pitch/yaw field of view")
        return self


def gaze_to_pitch_yaw(gaze) -> tuple[float, float]:
    """Decompose a unit gaze direction into (pitch, yaw) in degrees.

    pitch is elevation (positive up), yaw is azimuth about +y (positive
    toward +x). Straight ahead (0,0,1) maps to (0, 0).
    """
    g = np.asarray(gaze, dtype=np.float64)
    pitch = math.degrees(math.asin(max(-1.0, min(1.0, g[1]))))
    yaw = math.degrees(math.atan2(g[0], g[2]))
    return pitch, yaw


def pitch_yaw_to_gaze(pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Inverse of gaze_to_pitch_yaw; returns a unit device-frame vector."""
    p = math.radians(pitch_deg)
    y = math.radians(yaw_deg)
    return np.array(
        [math.cos(p) * math.sin(y), math.sin(p), math.cos(p) * math.cos(y)],
        dtype=np.float64,
    )


def project(point, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """Pinhole projection of a device-frame point to pixel coordinates.

    No visibility clipping: off-sensor coordinates are returned as-is and the
    caller clips. Points at or behind the camera plane raise BehindCameraError.
    """
    p_cam = pose.rotation @ np.asarray(point, dtype=np.float64) + pose.translation
    z = p_cam[2]
    if z <= _MIN_Z_MM:
        raise BehindCameraError(f"point at camera-space z={z:.3g} mm is behind the camera")
    return np.array(
        [intrinsics.fx * p_cam[0] / z + intrinsics.cx,
         intrinsics.fy * p_cam[1] / z + intrinsics.cy]
    )


def angular_error(a, b) -> float:
    """Angle between two unit vectors in degrees: arccos of the clamped dot."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValidationError("angular_error expects unit vectors")
    d = float(np.dot(a, b))
    return math.degrees(math.acos(max(-1.0, min(1.0, d))))


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: element at rank ceil(p/100 * n), 1-based."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    n = vals.size
    if n == 0:
        raise ValidationError("percentile of an empty list")
    if not 0.0 < p <= 100.0:
        raise ValidationError("percentile p must be in (0, 100]")
    rank = math.ceil(p / 100.0 * n)
    return float(vals[rank - 1])


def pearson_r(xs, ys) -> float:
    """Sample Pearson correlation. Zero-variance series are an error, not NaN."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValidationError("pearson_r expects two equal-length series, n >= 2")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float(np.dot(xd, xd)))
    sy = math.sqrt(float(np.dot(yd, yd)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeriesError("degenerate series: zero variance")
    return float(np.dot(xd, yd) / (sx * sy))
