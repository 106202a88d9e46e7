"""Synthetic scene generation: planted objects, frustum noise, ground truth.

Builds everything the pipeline consumes from scratch: a ring rig of
cameras, per-frame point clouds holding ellipsoidal object blobs plus
uniform in-frustum noise, matching detection files whose boxes are derived
from the actual point projections, manifests, and a ground-truth table
mapping every point to its planted object (or -1 for noise).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calib import CameraModel, DistortionCoeffs, ExtrinsicPose, Intrinsics
from .cloud_io import PointCloudFrame, write_manifest, write_pcd

# The classes the detector sees most in road scenes.
_OBJECT_CLASSES = (2, 0, 7)  # car, person, truck
_BOX_PAD_PX = 2.0
_OBJECT_DEPTH_RANGE = (7.0, 15.0)
_NOISE_DEPTH_RANGE = (2.5, 55.0)
_LIDAR_PERIOD = 0.1
_CAMERA_OFFSET = 0.005


class SceneError(ValueError):
    """Scene construction failed (object not visible to its camera)."""


def default_rig(
    n_cameras: int = 5,
    width: int = 640,
    height: int = 480,
    focal: float = 500.0,
) -> list[CameraModel]:
    """A ring of cameras covering the full azimuth, camera i yawed 360/n * i degrees.

    Camera axes: z forward along the view direction, x right, y down;
    the LIDAR frame is x forward, y left, z up.
    """
    rig = []
    for i in range(n_cameras):
        yaw = 2.0 * math.pi * i / n_cameras
        c, s = math.cos(yaw), math.sin(yaw)
        rotation = np.array(
            [
                [s, -c, 0.0],   # image right
                [0.0, 0.0, -1.0],  # image down
                [c, s, 0.0],    # optical axis
            ]
        )
        center = 0.1 * np.array([c, s, 0.0])  # camera sits slightly outward
        translation = -rotation @ center
        rig.append(
            CameraModel(
                id=i,
                intrinsics=Intrinsics(
                    fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
                    width=width, height=height,
                ),
                distortion=DistortionCoeffs(),
                pose=ExtrinsicPose(rotation, translation),
            )
        )
    return rig


def save_rig(rig: list[CameraModel], path: str | Path) -> None:
    """Write a rig as a calibration JSON file loadable by load_rig."""
    cameras = []
    for cam in rig:
        d = cam.distortion
        cameras.append(
            {
                "id": cam.id,
                "width": cam.intrinsics.width,
                "height": cam.intrinsics.height,
                "fx": cam.intrinsics.fx,
                "fy": cam.intrinsics.fy,
                "cx": cam.intrinsics.cx,
                "cy": cam.intrinsics.cy,
                "dist": [d.k1, d.k2, d.p1, d.p2, d.k3],
                "rotation": [float(v) for v in cam.pose.rotation.reshape(-1)],
                "translation": [float(v) for v in cam.pose.translation],
            }
        )
    Path(path).write_text(json.dumps({"cameras": cameras}, indent=2) + "\n")


@dataclass(frozen=True)
class ScenePaths:
    """Locations of everything gen_scene wrote."""

    out_dir: Path
    calibration: Path
    cloud_manifest: Path
    detection_manifest: Path
    ground_truth: Path
    n_frames: int
    n_objects: int


@dataclass
class _PlantedObject:
    camera: CameraModel
    class_id: int
    base_xn: float
    base_yn: float
    depth: float
    radii: np.ndarray
    drift_xn: float
    drift_yn: float
    drift_depth: float


def _camera_to_lidar(cam: CameraModel, pts_cam: np.ndarray) -> np.ndarray:
    r = cam.pose.rotation
    t = cam.pose.translation
    return (pts_cam - t) @ r  # == R^T @ (p - t) per point


def _sample_ellipsoid(rng: np.random.Generator, n: int, radii: np.ndarray) -> np.ndarray:
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radius = rng.uniform(0.0, 1.0, size=n) ** (1.0 / 3.0)
    return dirs * radius[:, None] * radii


def gen_scene(
    out_dir: str | Path,
    frames: int = 20,
    objects: int = 3,
    noise_fraction: float = 0.3,
    seed: int = 0,
    rig: list[CameraModel] | None = None,
    points_per_object: int = 900,
) -> ScenePaths:
    """Generate a full synthetic input set under ``out_dir``.

    Each planted object is an ellipsoidal blob placed in front of one rig
    camera; its detection box is the padded extent of the blob's actual
    projections, so every object point is guaranteed to fall inside its
    box.  ``noise_fraction`` of each box's labeled points is uniform
    frustum noise spread over a long depth range, planted by sampling a
    pixel inside the box and a depth, then unprojecting.

    Ground truth lines are "frame_id point_index object_id" with -1 for
    noise points.  Raises SceneError if an object cannot be placed fully
    inside its camera's view.
    """
    if not 0.0 <= noise_fraction < 1.0:
        raise ValueError(f"noise fraction must be in [0, 1), got {noise_fraction}")
    if frames < 1:
        raise ValueError("at least one frame is required")
    out = Path(out_dir)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    (out / "dets").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if rig is None:
        rig = default_rig()
    calib_path = out / "calibration.json"
    save_rig(rig, calib_path)

    planted = []
    for j in range(objects):
        planted.append(
            _PlantedObject(
                camera=rig[j % len(rig)],
                class_id=_OBJECT_CLASSES[j % len(_OBJECT_CLASSES)],
                base_xn=rng.uniform(-0.18, 0.18),
                base_yn=rng.uniform(-0.10, 0.10),
                depth=rng.uniform(*_OBJECT_DEPTH_RANGE),
                radii=rng.uniform(0.35, 0.9, size=3),
                drift_xn=rng.uniform(-0.003, 0.003),
                drift_yn=rng.uniform(-0.0015, 0.0015),
                drift_depth=rng.uniform(-0.05, 0.05),
            )
        )

    cloud_rows = []
    det_rows = []
    gt_lines = []
    noise_lo, noise_hi = _NOISE_DEPTH_RANGE
    for f in range(frames):
        cloud_t = f * _LIDAR_PERIOD
        det_t = cloud_t + _CAMERA_OFFSET
        blocks: list[np.ndarray] = []
        object_ids: list[np.ndarray] = []
        noise_blocks: list[np.ndarray] = []
        dets_by_cam: dict[int, list[str]] = {cam.id: [] for cam in rig}
        for j, obj in enumerate(planted):
            cam = obj.camera
            intr = cam.intrinsics
            depth = obj.depth + f * obj.drift_depth
            center_cam = depth * np.array(
                [obj.base_xn + f * obj.drift_xn, obj.base_yn + f * obj.drift_yn, 1.0]
            )
            pts_cam = center_cam + _sample_ellipsoid(rng, points_per_object, obj.radii)
            xn = pts_cam[:, 0] / pts_cam[:, 2]
            yn = pts_cam[:, 1] / pts_cam[:, 2]
            u = intr.fx * xn + intr.cx
            v = intr.fy * yn + intr.cy
            x_min = float(u.min()) - _BOX_PAD_PX
            x_max = float(u.max()) + _BOX_PAD_PX
            y_min = float(v.min()) - _BOX_PAD_PX
            y_max = float(v.max()) + _BOX_PAD_PX
            if x_min < 0 or y_min < 0 or x_max > intr.width or y_max > intr.height:
                raise SceneError(
                    f"object {j} does not fit inside camera {cam.id} "
                    f"(box {x_min:.0f},{y_min:.0f},{x_max:.0f},{y_max:.0f})"
                )
            if (x_max - x_min) * (y_max - y_min) > intr.width * intr.height / 4.0:
                raise SceneError(f"object {j} box exceeds a quarter of camera {cam.id} image")
            blocks.append(_camera_to_lidar(cam, pts_cam))
            object_ids.append(np.full(points_per_object, j, dtype=np.int64))
            dets_by_cam[cam.id].append(
                f"{cam.id} {f} {obj.class_id} {0.95 - 0.02 * j:.2f} "
                f"{x_min:.3f} {y_min:.3f} {x_max:.3f} {y_max:.3f}"
            )
            if noise_fraction > 0.0:
                n_noise = int(round(points_per_object * noise_fraction / (1.0 - noise_fraction)))
                nu = rng.uniform(x_min + 0.5, x_max - 0.5, size=n_noise)
                nv = rng.uniform(y_min + 0.5, y_max - 0.5, size=n_noise)
                # uniform over the frustum volume: slice area grows with depth
                # squared, so depth follows the cube-root inverse CDF
                cube = rng.uniform(noise_lo ** 3, noise_hi ** 3, size=n_noise)
                nd = np.cbrt(cube)
                noise_cam = np.stack(
                    [(nu - intr.cx) / intr.fx * nd, (nv - intr.cy) / intr.fy * nd, nd], axis=1
                )
                noise_blocks.append(_camera_to_lidar(cam, noise_cam))

        if blocks or noise_blocks:
            xyz = np.concatenate(blocks + noise_blocks, axis=0).astype(np.float32)
            objid = np.concatenate(
                object_ids + [np.full(len(b), -1, dtype=np.int64) for b in noise_blocks]
            )
        else:
            xyz = np.zeros((0, 3), dtype=np.float32)
            objid = np.zeros(0, dtype=np.int64)
        frame = PointCloudFrame(
            frame_id=f,
            timestamp=cloud_t,
            xyz=xyz,
            intensity=rng.uniform(0.0, 1.0, size=len(xyz)).astype(np.float32),
        )
        cloud_rel = f"clouds/frame_{f:06d}.pcd"
        write_pcd(frame, out / cloud_rel)
        cloud_rows.append(("cloud", f, cloud_t, cloud_rel))
        for cam in rig:
            det_rel = f"dets/frame_{f:06d}_cam{cam.id}.txt"
            with open(out / det_rel, "w") as fh:
                fh.write(f"# camera {cam.id}, frame {f}\n")
                for line in dets_by_cam[cam.id]:
                    fh.write(line + "\n")
            det_rows.append((f"cam{cam.id}", f, det_t, det_rel))
        for i, oid in enumerate(objid):
            gt_lines.append(f"{f} {i} {oid}")

    cloud_manifest = out / "clouds.manifest"
    det_manifest = out / "dets.manifest"
    write_manifest(cloud_manifest, cloud_rows)
    # group detection rows by stream so each stream's timestamps stay ordered
    det_rows.sort(key=lambda r: (r[0], r[1]))
    write_manifest(det_manifest, det_rows)
    gt_path = out / "ground_truth.txt"
    gt_path.write_text("\n".join(gt_lines) + ("\n" if gt_lines else ""))
    return ScenePaths(
        out_dir=out,
        calibration=calib_path,
        cloud_manifest=cloud_manifest,
        detection_manifest=det_manifest,
        ground_truth=gt_path,
        n_frames=frames,
        n_objects=objects,
    )


def read_ground_truth(path: str | Path) -> dict[int, np.ndarray]:
    """Load a ground-truth file as {frame_id: object id per point index}."""
    per_frame: dict[int, list[tuple[int, int]]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        f, i, oid = (int(t) for t in line.split())
        per_frame.setdefault(f, []).append((i, oid))
    out = {}
    for f, pairs in per_frame.items():
        arr = np.full(max(i for i, _ in pairs) + 1, -1, dtype=np.int64)
        for i, oid in pairs:
            arr[i] = oid
        out[f] = arr
    return out
