"""Camera geometry: calibration files, rigid transforms, lens distortion, projection.

The distortion model is the 5-coefficient Brown-Conrady polynomial
(k1, k2, k3 radial; p1, p2 tangential) operating on normalized image
coordinates.  Extrinsic poses map LIDAR-frame coordinates into the camera
frame (p_cam = R @ p_lidar + t).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_Z_MIN = 1e-6
ROTATION_TOL = 1e-9
UNDISTORT_MAX_ITER = 50
UNDISTORT_STEP_TOL = 1e-10
MAX_CAMERAS = 5


class CalibrationError(ValueError):
    """A calibration file or camera parameter set violates the schema."""


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters and image size, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise CalibrationError(f"{name} must be finite, got {v}")
        if self.fx <= 0 or self.fy <= 0:
            raise CalibrationError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise CalibrationError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise CalibrationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class DistortionCoeffs:
    """Brown-Conrady coefficients, in the conventional (k1, k2, p1, p2, k3) file order."""

    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def __post_init__(self) -> None:
        for name in ("k1", "k2", "p1", "p2", "k3"):
            if not math.isfinite(getattr(self, name)):
                raise CalibrationError(f"distortion coefficient {name} is not finite")

    @property
    def is_zero(self) -> bool:
        return self.k1 == self.k2 == self.p1 == self.p2 == self.k3 == 0.0


@dataclass(frozen=True)
class ExtrinsicPose:
    """Rigid LIDAR-to-camera transform: rotation (3x3, row-major) and translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64)
        if r.size == 9:
            r = r.reshape(3, 3)
        if r.shape != (3, 3):
            raise CalibrationError(f"rotation must be 3x3 (or 9 row-major values), got shape {r.shape}")
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,):
            raise CalibrationError(f"translation must have 3 components, got {t.shape}")
        if not np.isfinite(r).all() or not np.isfinite(t).all():
            raise CalibrationError("pose contains non-finite values")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err >= ROTATION_TOL:
            raise CalibrationError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
        det = float(np.linalg.det(r))
        if abs(det - 1.0) >= ROTATION_TOL:
            raise CalibrationError(f"rotation determinant is {det:.12f}, expected +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "ExtrinsicPose":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class CameraModel:
    """One calibrated camera of the rig."""

    id: int
    intrinsics: Intrinsics
    distortion: DistortionCoeffs
    pose: ExtrinsicPose

    def __post_init__(self) -> None:
        if not (0 <= self.id < MAX_CAMERAS):
            raise CalibrationError(f"camera id must be in [0, {MAX_CAMERAS}), got {self.id}")


_CAMERA_KEYS = {
    "id", "width", "height", "fx", "fy", "cx", "cy", "dist", "rotation", "translation",
}


def _number(entry: dict, key: str, where: str) -> float:
    v = entry[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CalibrationError(f"{where}: field '{key}' must be a number, got {v!r}")
    return float(v)


def _integer(entry: dict, key: str, where: str) -> int:
    v = entry[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise CalibrationError(f"{where}: field '{key}' must be an integer, got {v!r}")
    return v


def _number_list(entry: dict, key: str, length: int, where: str) -> list[float]:
    v = entry[key]
    if not isinstance(v, list) or len(v) != length:
        raise CalibrationError(f"{where}: field '{key}' must be a list of {length} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise CalibrationError(f"{where}: field '{key}' must contain only numbers, got {x!r}")
        out.append(float(x))
    return out


def _parse_camera(entry: object, position: int) -> CameraModel:
    where = f"camera entry #{position}"
    if not isinstance(entry, dict):
        raise CalibrationError(f"{where}: expected an object")
    unknown = set(entry) - _CAMERA_KEYS
    if unknown:
        raise CalibrationError(f"{where}: unknown keys {sorted(unknown)}")
    missing = _CAMERA_KEYS - set(entry)
    if missing:
        raise CalibrationError(f"{where}: missing keys {sorted(missing)}")
    cam_id = _integer(entry, "id", where)
    where = f"camera {cam_id}"
    intr = Intrinsics(
        fx=_number(entry, "fx", where),
        fy=_number(entry, "fy", where),
        cx=_number(entry, "cx", where),
        cy=_number(entry, "cy", where),
        width=_integer(entry, "width", where),
        height=_integer(entry, "height", where),
    )
    k1, k2, p1, p2, k3 = _number_list(entry, "dist", 5, where)
    dist = DistortionCoeffs(k1=k1, k2=k2, p1=p1, p2=p2, k3=k3)
    rotation = _number_list(entry, "rotation", 9, where)
    translation = _number_list(entry, "translation", 3, where)
    try:
        pose = ExtrinsicPose(np.array(rotation).reshape(3, 3), np.array(translation))
    except CalibrationError as e:
        raise CalibrationError(f"{where}: {e}") from e
    try:
        return CameraModel(id=cam_id, intrinsics=intr, distortion=dist, pose=pose)
    except CalibrationError as e:
        raise CalibrationError(f"{where}: {e}") from e


def load_rig(path: str | Path) -> list[CameraModel]:
    """Load and validate a camera rig from a calibration JSON file.

    The file holds a single top-level key "cameras": a list of 1 to 5
    entries, each with id, width, height, fx, fy, cx, cy,
    dist=[k1,k2,p1,p2,k3], rotation (9 row-major values, LIDAR to camera)
    and translation (3 values, meters).  Unknown keys are rejected.
    """
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CalibrationError(f"{p}: not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise CalibrationError(f"{p}: top level must be an object")
    unknown = set(raw) - {"cameras"}
    if unknown:
        raise CalibrationError(f"{p}: unknown top-level keys {sorted(unknown)}")
    cameras = raw.get("cameras")
    if not isinstance(cameras, list):
        raise CalibrationError(f"{p}: 'cameras' must be a list")
    if not 1 <= len(cameras) <= MAX_CAMERAS:
        raise CalibrationError(f"{p}: rig must hold 1 to {MAX_CAMERAS} cameras, got {len(cameras)}")
    models = []
    seen: set[int] = set()
    for i, entry in enumerate(cameras):
        model = _parse_camera(entry, i)
        if model.id in seen:
            raise CalibrationError(f"{p}: duplicate camera id {model.id}")
        seen.add(model.id)
        models.append(model)
    return models


def world_to_camera(pose: ExtrinsicPose, p: Sequence[float] | np.ndarray) -> np.ndarray:
    """Transform one LIDAR-frame point into the camera frame."""
    v = np.asarray(p, dtype=np.float64).reshape(3)
    return pose.rotation @ v + pose.translation


def distort_normalized(d: DistortionCoeffs, xn, yn):
    """Apply Brown-Conrady distortion to normalized coordinates.

    Accepts scalars or numpy arrays; returns the same kind.
    """
    r2 = xn * xn + yn * yn
    radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2
    xd = xn * radial + 2.0 * d.p1 * xn * yn + d.p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + d.p1 * (r2 + 2.0 * yn * yn) + 2.0 * d.p2 * xn * yn
    return xd, yd


def undistort_normalized(
    d: DistortionCoeffs,
    xd,
    yd,
    max_iter: int = UNDISTORT_MAX_ITER,
    tol: float = UNDISTORT_STEP_TOL,
):
    """Invert the distortion model by fixed-point iteration.

    Starting from the distorted coordinates, each step divides out the
    radial factor and subtracts the tangential terms evaluated at the
    current estimate.  Stops when the max-norm step falls below ``tol``;
    raises ValueError if ``max_iter`` iterations do not converge (the
    input is outside the model's invertible region).
    """
    xd_a = np.asarray(xd, dtype=np.float64)
    yd_a = np.asarray(yd, dtype=np.float64)
    scalar = xd_a.ndim == 0
    if xd_a.size == 0:
        return xd_a.copy(), yd_a.copy()
    x = xd_a.copy()
    y = yd_a.copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2
        dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x)
        dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = (xd_a - dx) / radial
            y_new = (yd_a - dy) / radial
        step = max(float(np.max(np.abs(x_new - x))), float(np.max(np.abs(y_new - y))))
        x, y = x_new, y_new
        if step < tol:
            break
    else:
        raise ValueError(
            f"undistortion did not converge after {max_iter} iterations; "
            "point is outside the invertible region"
        )
    if scalar:
        return float(x), float(y)
    return x, y


def project_points(
    cam: CameraModel,
    points: np.ndarray,
    use_distortion: bool = False,
    z_min: float = DEFAULT_Z_MIN,
) -> tuple[np.ndarray, np.ndarray]:
    """Project an (n, 3) array of LIDAR-frame points to pixel coordinates.

    Returns (uv, in_front): uv is (n, 2) float64 with NaN rows where the
    point sits at or behind the camera plane (camera-frame z <= z_min);
    in_front is the matching boolean mask.  Pixels outside the image are
    returned as-is; bounds are the caller's concern.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    r = cam.pose.rotation
    t = cam.pose.translation
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    cam_x = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    cam_y = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    cam_z = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    in_front = cam_z > z_min
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = cam_x / cam_z
        yn = cam_y / cam_z
    if use_distortion:
        xn, yn = distort_normalized(cam.distortion, xn, yn)
    intr = cam.intrinsics
    u = intr.fx * xn + intr.cx
    v = intr.fy * yn + intr.cy
    uv = np.stack([u, v], axis=1)
    uv[~in_front] = np.nan
    return uv, in_front


def project(
    cam: CameraModel,
    p_lidar: Sequence[float] | np.ndarray,
    use_distortion: bool = False,
    z_min: float = DEFAULT_Z_MIN,
) -> tuple[float, float] | None:
    """Project a single LIDAR point; None when it is at or behind the camera."""
    pts = np.asarray(p_lidar, dtype=np.float64).reshape(1, 3)
    uv, in_front = project_points(cam, pts, use_distortion=use_distortion, z_min=z_min)
    if not in_front[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def in_image_bounds(intr: Intrinsics, u, v):
    """Half-open containment test against [0, width) x [0, height)."""
    return (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
