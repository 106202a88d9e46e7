"""Seeded k-means denoising of labeled points and drop-rate reporting.

Each detection's points are clustered independently (Lloyd's algorithm on
xyz only) and exactly the largest cluster is kept; everything else in that
detection is dropped as frustum noise.  All randomness flows from an
explicit 64-bit seed, so runs are reproducible and schedule-independent.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cloud_io import PointCloudFrame
from .fusion import LabeledCloud
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class KMeansConfig:
    """k-means knobs: cluster count, iteration cap, seed, stop threshold (meters)."""

    k: int = 3
    max_iter: int = 100
    seed: int = 0
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")


@dataclass(frozen=True)
class Clustering:
    """Result of one k-means run.

    ``inertia_history`` holds the assignment-step inertia of every
    iteration followed by the final re-assignment inertia; Lloyd's
    algorithm makes the sequence non-increasing.
    """

    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    inertia_history: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.centroids)


def _squared_distances(pts: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans(points: np.ndarray | Sequence[Sequence[float]], cfg: KMeansConfig) -> Clustering:
    """Lloyd's algorithm with seeded initialization.

    Initialization picks k distinct input points uniformly at random from
    the splitmix64 stream seeded by ``cfg.seed``.  Assignment uses squared
    Euclidean distance with ties to the lowest cluster id; an emptied
    cluster is re-seeded to the point farthest from its former centroid.
    Iteration stops when the max-norm centroid movement drops below
    ``cfg.tol`` (or reaches an exact fixed point, or ``cfg.max_iter``).
    A final assignment pass guarantees the reported assignments are
    nearest-centroid with respect to the reported centroids.

    If fewer points than k are given, k is lowered to the point count for
    the call (visible as ``result.k``).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    n = len(pts)
    if n == 0:
        raise ValueError("kmeans requires at least one point")
    k = min(cfg.k, n)
    rng = SplitMix64(cfg.seed)
    init = rng.sample_distinct(n, k)
    centroids = pts[init].copy()

    history: list[float] = []
    iterations = 0
    assign = np.zeros(n, dtype=np.int64)
    for it in range(1, cfg.max_iter + 1):
        d2 = _squared_distances(pts, centroids)
        assign = d2.argmin(axis=1)
        history.append(float(d2.min(axis=1).sum()))
        counts = np.bincount(assign, minlength=k)
        new_centroids = np.empty_like(centroids)
        for dim in range(3):
            sums = np.bincount(assign, weights=pts[:, dim], minlength=k)
            with np.errstate(invalid="ignore"):
                new_centroids[:, dim] = sums / counts
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(((pts - centroids[c]) ** 2).sum(axis=1)))
            new_centroids[c] = pts[far]
        movement = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        iterations = it
        if movement < cfg.tol or movement == 0.0:
            break

    d2 = _squared_distances(pts, centroids)
    assign = d2.argmin(axis=1).astype(np.int32)
    inertia = float(d2.min(axis=1).sum())
    history.append(inertia)
    centroids.flags.writeable = False
    assign.flags.writeable = False
    return Clustering(
        assignments=assign,
        centroids=centroids,
        inertia=inertia,
        iterations_run=iterations,
        inertia_history=tuple(history),
    )


def denoise_detection(
    frame: PointCloudFrame,
    lc: LabeledCloud,
    detection_ref: tuple[int, int],
    cfg: KMeansConfig,
) -> LabeledCloud:
    """Cluster one detection's points and keep exactly the largest cluster.

    Ties on size pick the cluster whose centroid is nearest the sensor
    origin (then the lowest cluster id).  Kept members get kept=True,
    dropped members kept=False; both get their cluster id recorded.
    Labels of other detections are untouched.  Mutates and returns ``lc``.
    """
    cam_id, det_idx = detection_ref
    member = (lc.camera_id == cam_id) & (lc.det_index == det_idx) & (lc.class_id >= 0)
    idx = np.flatnonzero(member)
    if idx.size == 0:
        raise ValueError(f"detection (camera {cam_id}, index {det_idx}) has no labeled points")
    clustering = kmeans(frame.xyz[idx], cfg)
    sizes = np.bincount(clustering.assignments, minlength=clustering.k)
    origin_d2 = (clustering.centroids ** 2).sum(axis=1)
    keep_cluster = min(
        range(clustering.k), key=lambda c: (-int(sizes[c]), float(origin_d2[c]), c)
    )
    lc.cluster_id[idx] = clustering.assignments
    lc.kept[idx] = clustering.assignments == keep_cluster
    return lc


@dataclass(frozen=True)
class FrameReport:
    """Per-frame labeling and denoising counts."""

    frame_id: int
    total_points: int
    labeled_before: int
    kept_after: int
    dropped: int
    drop_rate_percent: float
    class_before: dict[int, int]
    class_after: dict[int, int]

    @property
    def is_empty(self) -> bool:
        return self.labeled_before == 0


def _class_counts(class_ids: np.ndarray) -> dict[int, int]:
    ids, counts = np.unique(class_ids, return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}


def frame_report(frame: PointCloudFrame, lc: LabeledCloud) -> FrameReport:
    """Build a report from the current label state of a frame."""
    labeled = lc.class_id >= 0
    kept = labeled & lc.kept
    labeled_before = int(labeled.sum())
    kept_after = int(kept.sum())
    dropped = labeled_before - kept_after
    rate = 100.0 * dropped / labeled_before if labeled_before else 0.0
    return FrameReport(
        frame_id=frame.frame_id,
        total_points=len(frame),
        labeled_before=labeled_before,
        kept_after=kept_after,
        dropped=dropped,
        drop_rate_percent=rate,
        class_before=_class_counts(lc.class_id[labeled]),
        class_after=_class_counts(lc.class_id[kept]),
    )


def denoise_frame(
    frame: PointCloudFrame, lc: LabeledCloud, cfg: KMeansConfig
) -> tuple[LabeledCloud, FrameReport]:
    """Denoise every detection with at least one labeled point.

    Detections are processed in (camera_id, detection index) order; each
    k-means call runs on its own stream derived from (seed, frame_id,
    camera_id, detection index), so any parallel schedule over detections
    or frames reproduces the sequential result.
    """
    labeled = lc.class_id >= 0
    if labeled.any():
        pairs = np.unique(
            np.stack([lc.camera_id[labeled], lc.det_index[labeled]], axis=1), axis=0
        )
        for cam_id, det_idx in pairs:
            det_cfg = replace(
                cfg, seed=derive_seed(cfg.seed, frame.frame_id, int(cam_id), int(det_idx))
            )
            denoise_detection(frame, lc, (int(cam_id), int(det_idx)), det_cfg)
    return lc, frame_report(frame, lc)


@dataclass(frozen=True)
class SequenceSummary:
    """Drop-rate statistics over a frame sequence."""

    frame_ids: tuple[int, ...]
    drop_rates: tuple[float, ...]
    labeled_before: tuple[int, ...]
    kept_after: tuple[int, ...]
    empty_frames: tuple[int, ...]
    mean_drop_rate: float
    max_frame: int | None
    max_rate: float | None
    min_frame: int | None
    min_rate: float | None

    def render(self) -> str:
        lines = ["frame  labeled     kept  dropped  drop_rate"]
        for fid, rate, before, after in zip(
            self.frame_ids, self.drop_rates, self.labeled_before, self.kept_after
        ):
            flag = "  (no labeled points)" if before == 0 else ""
            lines.append(f"{fid:5d}  {before:7d}  {after:7d}  {before - after:7d}  {rate:8.2f}%{flag}")
        n_active = len(self.frame_ids) - len(self.empty_frames)
        lines.append(f"frames: {len(self.frame_ids)} ({n_active} with labels, {len(self.empty_frames)} empty)")
        lines.append(f"mean drop rate: {self.mean_drop_rate:.2f}% over {n_active} frames")
        if self.max_frame is not None:
            lines.append(f"max drop rate: {self.max_rate:.2f}% at frame {self.max_frame}")
            lines.append(f"min drop rate: {self.min_rate:.2f}% at frame {self.min_frame}")
        return "\n".join(lines)


def aggregate_reports(reports: Iterable[FrameReport]) -> SequenceSummary:
    """Summarize per-frame reports: every rate, the extremes, and the mean.

    Frames without labeled points are flagged and excluded from the mean
    and the extremes.
    """
    reports = list(reports)
    frame_ids = tuple(r.frame_id for r in reports)
    rates = tuple(r.drop_rate_percent for r in reports)
    empty = tuple(r.frame_id for r in reports if r.is_empty)
    active = [r for r in reports if not r.is_empty]
    mean = sum(r.drop_rate_percent for r in active) / len(active) if active else 0.0
    max_frame = max_rate = min_frame = min_rate = None
    for r in active:
        if max_rate is None or r.drop_rate_percent > max_rate:
            max_rate, max_frame = r.drop_rate_percent, r.frame_id
        if min_rate is None or r.drop_rate_percent < min_rate:
            min_rate, min_frame = r.drop_rate_percent, r.frame_id
    return SequenceSummary(
        frame_ids=frame_ids,
        drop_rates=rates,
        labeled_before=tuple(r.labeled_before for r in reports),
        kept_after=tuple(r.kept_after for r in reports),
        empty_frames=empty,
        mean_drop_rate=mean,
        max_frame=max_frame,
        max_rate=max_rate,
        min_frame=min_frame,
        min_rate=min_rate,
    )


_BASE_COLUMNS = (
    "frame_id", "total_points", "labeled_before", "kept_after", "dropped", "drop_rate_percent",
)
_CLASS_COLUMN = re.compile(r"^class_(\d+)_(before|after)$")


def write_report_csv(path: str | Path, reports: Sequence[FrameReport]) -> None:
    """Write one CSV row per frame, plus before/after columns per class seen."""
    class_ids = sorted({c for r in reports for c in (*r.class_before, *r.class_after)})
    header = list(_BASE_COLUMNS)
    for cid in class_ids:
        header += [f"class_{cid}_before", f"class_{cid}_after"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in reports:
            row = [
                r.frame_id, r.total_points, r.labeled_before, r.kept_after, r.dropped,
                f"{r.drop_rate_percent:.6f}",
            ]
            for cid in class_ids:
                row += [r.class_before.get(cid, 0), r.class_after.get(cid, 0)]
            writer.writerow(row)


def read_report_csv(path: str | Path) -> list[FrameReport]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty report CSV") from None
        if tuple(header[: len(_BASE_COLUMNS)]) != _BASE_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header {header[:6]}")
        class_cols: list[tuple[int, int, str]] = []
        for col, name in enumerate(header[len(_BASE_COLUMNS):], start=len(_BASE_COLUMNS)):
            m = _CLASS_COLUMN.match(name)
            if not m:
                raise ValueError(f"{path}: unexpected CSV column '{name}'")
            class_cols.append((col, int(m.group(1)), m.group(2)))
        reports = []
        for row in reader:
            if not row:
                continue
            before: dict[int, int] = {}
            after: dict[int, int] = {}
            for col, cid, kind in class_cols:
                count = int(row[col])
                if count:
                    (before if kind == "before" else after)[cid] = count
            reports.append(
                FrameReport(
                    frame_id=int(row[0]),
                    total_points=int(row[1]),
                    labeled_before=int(row[2]),
                    kept_after=int(row[3]),
                    dropped=int(row[4]),
                    drop_rate_percent=float(row[5]),
                    class_before=before,
                    class_after=after,
                )
            )
    return reports
