"""Label LIDAR points by projecting them into detection boxes.

Every point is projected into every camera; a point whose pixel lands
inside a kept detection box (and inside the image) is labeled with that
detection's class.  When several boxes claim a point, the smallest box
wins, with ties broken by lower camera id and then lower detection index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .calib import DEFAULT_Z_MIN, CameraModel, project_points
from .cloud_io import PointCloudFrame
from .detect_ingest import Detection


@dataclass(frozen=True)
class PointLabel:
    """Label state of one point (view of a LabeledCloud row)."""

    point_index: int
    class_id: int | None
    detection_ref: tuple[int, int] | None
    cluster_id: int | None
    kept: bool

    def __post_init__(self) -> None:
        if (self.class_id is None) != (self.detection_ref is None):
            raise ValueError("class_id and detection_ref must be present together")
        if self.cluster_id is not None and self.class_id is None:
            raise ValueError("cluster_id requires a class label")


@dataclass
class LabeledCloud:
    """Per-point label assignments over one frame, stored as parallel arrays.

    Sentinel -1 encodes absence in the integer columns.  ``kept`` is True
    for labeled points that survived (or have not yet been through)
    denoising, False for unlabeled and dropped points.
    """

    frame_id: int
    class_id: np.ndarray
    camera_id: np.ndarray
    det_index: np.ndarray
    cluster_id: np.ndarray
    kept: np.ndarray

    @classmethod
    def empty(cls, frame_id: int, n: int) -> "LabeledCloud":
        return cls(
            frame_id=frame_id,
            class_id=np.full(n, -1, dtype=np.int32),
            camera_id=np.full(n, -1, dtype=np.int32),
            det_index=np.full(n, -1, dtype=np.int32),
            cluster_id=np.full(n, -1, dtype=np.int32),
            kept=np.zeros(n, dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.class_id)

    def validate(self) -> None:
        n = len(self.class_id)
        for name in ("camera_id", "det_index", "cluster_id", "kept"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column '{name}' length differs from class_id")
        labeled = self.class_id >= 0
        if not np.array_equal(labeled, self.camera_id >= 0) or not np.array_equal(
            labeled, self.det_index >= 0
        ):
            raise ValueError("class_id and detection reference must be present together")
        if np.any((self.cluster_id >= 0) & ~labeled):
            raise ValueError("cluster_id requires a class label")
        if np.any(self.kept & ~labeled):
            raise ValueError("kept is only meaningful for labeled points")

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.class_id >= 0

    @property
    def n_labeled(self) -> int:
        return int(np.count_nonzero(self.class_id >= 0))

    def label(self, i: int) -> PointLabel:
        labeled = self.class_id[i] >= 0
        return PointLabel(
            point_index=i,
            class_id=int(self.class_id[i]) if labeled else None,
            detection_ref=(int(self.camera_id[i]), int(self.det_index[i])) if labeled else None,
            cluster_id=int(self.cluster_id[i]) if self.cluster_id[i] >= 0 else None,
            kept=bool(self.kept[i]),
        )

    @property
    def labels(self) -> list[PointLabel]:
        return [self.label(i) for i in range(len(self))]

    def copy(self) -> "LabeledCloud":
        return LabeledCloud(
            frame_id=self.frame_id,
            class_id=self.class_id.copy(),
            camera_id=self.camera_id.copy(),
            det_index=self.det_index.copy(),
            cluster_id=self.cluster_id.copy(),
            kept=self.kept.copy(),
        )


def point_in_box(pixel: tuple[float, float], box) -> bool:
    """Half-open box membership: [x_min, x_max) x [y_min, y_max)."""
    u, v = pixel
    return bool(box.x_min <= u < box.x_max and box.y_min <= v < box.y_max)


def label_frame(
    frame: PointCloudFrame,
    rig: Sequence[CameraModel],
    detections: Mapping[int, Sequence[Detection]],
    distortion_mode: bool = False,
    z_min: float = DEFAULT_Z_MIN,
) -> LabeledCloud:
    """Assign a detection label to every point whose projection hits a box.

    ``detections`` maps camera id to that camera's (pre-filtered) detection
    list; every key must name a rig camera.  A pixel outside the image
    never matches a box.  Overlap is resolved per point by smallest box
    area, then lower camera id, then lower detection index.  All labeled
    points start with kept=True; denoising happens downstream.
    """
    rig_by_id = {cam.id: cam for cam in rig}
    unknown = sorted(set(detections) - set(rig_by_id))
    if unknown:
        raise ValueError(f"detections reference camera ids {unknown} absent from rig")
    n = len(frame)
    lc = LabeledCloud.empty(frame.frame_id, n)
    if n == 0:
        return lc

    candidates = []
    for cam_id in sorted(detections):
        dets = detections[cam_id]
        if not dets:
            continue
        cam = rig_by_id[cam_id]
        bad = [d.camera_id for d in dets if d.camera_id != cam_id]
        if bad:
            raise ValueError(
                f"detection list for camera {cam_id} contains records for camera {bad[0]}"
            )
        uv, in_front = project_points(cam, frame.xyz, use_distortion=distortion_mode, z_min=z_min)
        u, v = uv[:, 0], uv[:, 1]
        intr = cam.intrinsics
        visible = in_front & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
        for det_idx, det in enumerate(dets):
            candidates.append((det.box.area, cam_id, det_idx, det, u, v, visible))

    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    unassigned = np.ones(n, dtype=bool)
    for _area, cam_id, det_idx, det, u, v, visible in candidates:
        box = det.box
        hit = (
            unassigned
            & visible
            & (u >= box.x_min)
            & (u < box.x_max)
            & (v >= box.y_min)
            & (v < box.y_max)
        )
        if not hit.any():
            continue
        lc.class_id[hit] = det.class_id
        lc.camera_id[hit] = cam_id
        lc.det_index[hit] = det_idx
        lc.kept[hit] = True
        unassigned &= ~hit
    return lc


def class_point_counts(lc: LabeledCloud) -> dict[int, int]:
    """Count labeled points per class id; unlabeled points are excluded."""
    labeled = lc.class_id[lc.class_id >= 0]
    ids, counts = np.unique(labeled, return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}
