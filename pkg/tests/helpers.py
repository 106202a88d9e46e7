"""Shared test utilities: brute-force oracles and fixture builders."""

from __future__ import annotations

from itertools import product

import numpy as np

from pclabel import BBox, CameraModel, Detection, DistortionCoeffs, ExtrinsicPose, Intrinsics


def simple_camera(
    cam_id: int = 0,
    fx: float = 100.0,
    fy: float = 100.0,
    cx: float = 50.0,
    cy: float = 50.0,
    width: int = 100,
    height: int = 100,
    dist: DistortionCoeffs | None = None,
    pose: ExtrinsicPose | None = None,
) -> CameraModel:
    return CameraModel(
        id=cam_id,
        intrinsics=Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height),
        distortion=dist or DistortionCoeffs(),
        pose=pose or ExtrinsicPose.identity(),
    )


def detection(cam_id: int, box: tuple[float, float, float, float],
              class_id: int = 2, frame_id: int = 0, confidence: float = 0.9) -> Detection:
    return Detection.make(cam_id, frame_id, class_id, confidence, BBox(*box))


def partition_inertia(pts: np.ndarray, assign: np.ndarray, k: int) -> float:
    """Inertia of a fixed partition, computed from scratch."""
    total = 0.0
    for c in range(k):
        members = pts[assign == c]
        if len(members):
            centroid = members.mean(axis=0)
            total += float(((members - centroid) ** 2).sum())
    return total


def enumerate_local_optima(pts: np.ndarray, k: int = 2) -> list[tuple[tuple[int, ...], float]]:
    """All assignment vectors stable under one Lloyd step, with their inertias.

    Stability: with centroids set to the means of the non-empty clusters,
    re-assigning every point to its nearest centroid (squared Euclidean,
    ties to the lowest cluster id among those considered) reproduces the
    assignment.  Exhaustive over k**n assignments; n must stay small.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n = len(pts)
    optima = []
    for assign in product(range(k), repeat=n):
        a = np.array(assign)
        clusters = sorted(set(assign))
        centroids = {c: pts[a == c].mean(axis=0) for c in clusters}
        stable = True
        for i in range(n):
            d2 = {c: float(((pts[i] - centroids[c]) ** 2).sum()) for c in clusters}
            best = min(clusters, key=lambda c: (d2[c], c))
            if best != assign[i]:
                stable = False
                break
        if stable:
            optima.append((assign, partition_inertia(pts, a, k)))
    return optima


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR with determinant fixed to +1."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
