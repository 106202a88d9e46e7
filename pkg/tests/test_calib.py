import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclabel import (
    CalibrationError,
    DistortionCoeffs,
    ExtrinsicPose,
    Intrinsics,
    distort_normalized,
    load_rig,
    project,
    project_points,
    undistort_normalized,
    world_to_camera,
)
from helpers import random_rotation, simple_camera


def _camera_entry(**overrides):
    entry = {
        "id": 0,
        "width": 640,
        "height": 480,
        "fx": 600.0,
        "fy": 600.0,
        "cx": 320.0,
        "cy": 240.0,
        "dist": [0.0, 0.0, 0.0, 0.0, 0.0],
        "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1],
        "translation": [0.0, 0.0, 0.0],
    }
    entry.update(overrides)
    return entry


def _write_rig(tmp_path, cameras, name="rig.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"cameras": cameras}))
    return path


class TestLoadRig:
    def test_single_identity_camera(self, tmp_path):
        rig = load_rig(_write_rig(tmp_path, [_camera_entry()]))
        assert len(rig) == 1
        cam = rig[0]
        assert cam.id == 0
        assert cam.intrinsics.fx == 600.0
        assert cam.intrinsics.width == 640
        assert cam.distortion.is_zero
        assert np.array_equal(cam.pose.rotation, np.eye(3))
        assert np.array_equal(cam.pose.translation, np.zeros(3))

    def test_non_orthonormal_rotation_names_camera(self, tmp_path):
        bad = _camera_entry(id=3, rotation=[1, 0, 0, 0, 1, 0, 0, 1, 0])
        with pytest.raises(CalibrationError, match="camera 3.*orthonormal"):
            load_rig(_write_rig(tmp_path, [bad]))

    def test_five_cameras_order_preserved(self, tmp_path):
        cams = [_camera_entry(id=i) for i in range(5)]
        rig = load_rig(_write_rig(tmp_path, cams))
        assert [c.id for c in rig] == [0, 1, 2, 3, 4]

    def test_duplicate_camera_id(self, tmp_path):
        cams = [_camera_entry(id=1), _camera_entry(id=1)]
        with pytest.raises(CalibrationError, match="duplicate camera id 1"):
            load_rig(_write_rig(tmp_path, cams))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(CalibrationError, match="unknown keys"):
            load_rig(_write_rig(tmp_path, [_camera_entry(model="pinhole")]))

    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = tmp_path / "rig.json"
        path.write_text(json.dumps({"cameras": [_camera_entry()], "version": 2}))
        with pytest.raises(CalibrationError, match="unknown top-level keys"):
            load_rig(path)

    def test_missing_key_rejected(self, tmp_path):
        entry = _camera_entry()
        del entry["fx"]
        with pytest.raises(CalibrationError, match="missing keys"):
            load_rig(_write_rig(tmp_path, [entry]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_rig(tmp_path / "nope.json")

    def test_not_json(self, tmp_path):
        path = tmp_path / "rig.json"
        path.write_text("not json {")
        with pytest.raises(CalibrationError, match="not valid JSON"):
            load_rig(path)

    def test_too_many_cameras(self, tmp_path):
        cams = [_camera_entry(id=i % 5) for i in range(6)]
        with pytest.raises(CalibrationError, match="1 to 5 cameras"):
            load_rig(_write_rig(tmp_path, cams))

    def test_empty_rig(self, tmp_path):
        with pytest.raises(CalibrationError, match="1 to 5 cameras"):
            load_rig(_write_rig(tmp_path, []))

    def test_wrong_dist_length(self, tmp_path):
        with pytest.raises(CalibrationError, match="'dist'"):
            load_rig(_write_rig(tmp_path, [_camera_entry(dist=[0.0, 0.0, 0.0])]))

    def test_non_numeric_field(self, tmp_path):
        with pytest.raises(CalibrationError, match="'fx'"):
            load_rig(_write_rig(tmp_path, [_camera_entry(fx="wide")]))


class TestIntrinsics:
    def test_negative_focal_rejected(self):
        with pytest.raises(CalibrationError, match="focal"):
            Intrinsics(fx=-1.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)

    def test_principal_point_outside_image_rejected(self):
        with pytest.raises(CalibrationError, match="principal point"):
            Intrinsics(fx=500.0, fy=500.0, cx=700.0, cy=240.0, width=640, height=480)

    def test_zero_size_rejected(self):
        with pytest.raises(CalibrationError, match="image size"):
            Intrinsics(fx=500.0, fy=500.0, cx=0.0, cy=0.0, width=0, height=480)


class TestExtrinsicPose:
    def test_rotation_tolerance_boundary(self):
        r = np.eye(3)
        r[0, 1] = 1e-4
        with pytest.raises(CalibrationError, match="orthonormal"):
            ExtrinsicPose(r, np.zeros(3))

    def test_reflection_rejected(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(CalibrationError, match="determinant"):
            ExtrinsicPose(r, np.zeros(3))

    def test_immutable_arrays(self):
        pose = ExtrinsicPose.identity()
        with pytest.raises(ValueError):
            pose.rotation[0, 0] = 2.0


class TestWorldToCamera:
    def test_identity(self):
        pose = ExtrinsicPose.identity()
        assert np.allclose(world_to_camera(pose, (1, 2, 3)), (1, 2, 3))

    def test_rotation_90_about_z(self):
        r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        pose = ExtrinsicPose(r, np.zeros(3))
        assert np.allclose(world_to_camera(pose, (1, 0, 0)), (0, 1, 0))

    def test_translation_cancels(self):
        pose = ExtrinsicPose(np.eye(3), np.array([0.0, 0.0, 5.0]))
        assert np.allclose(world_to_camera(pose, (0, 0, -5)), (0, 0, 0))


class TestDistortion:
    def test_zero_coefficients_identity(self):
        d = DistortionCoeffs()
        assert distort_normalized(d, 0.3, -0.2) == (0.3, -0.2)

    def test_radial_hand_value(self):
        # r2 = 0.25, radial = 1 - 0.1 * 0.25 = 0.975, x = 0.5 * 0.975
        d = DistortionCoeffs(k1=-0.1)
        xd, yd = distort_normalized(d, 0.5, 0.0)
        assert xd == pytest.approx(0.4875, abs=1e-12)
        assert yd == 0.0

    def test_origin_is_fixed_point(self):
        d = DistortionCoeffs(k1=0.2, k2=-0.05, p1=0.01, p2=-0.01, k3=0.001)
        assert distort_normalized(d, 0.0, 0.0) == (0.0, 0.0)

    def test_zero_coefficients_identity_on_grid(self):
        d = DistortionCoeffs()
        xn, yn = np.meshgrid(np.linspace(-3, 3, 31), np.linspace(-3, 3, 31))
        xd, yd = distort_normalized(d, xn, yn)
        assert np.array_equal(xd, xn) and np.array_equal(yd, yn)

    def test_undistort_zero_coefficients(self):
        d = DistortionCoeffs()
        assert undistort_normalized(d, 0.3, -0.2) == (0.3, -0.2)

    def test_undistort_roundtrip_k1(self):
        d = DistortionCoeffs(k1=-0.1)
        xd, yd = distort_normalized(d, 0.5, 0.0)
        xn, yn = undistort_normalized(d, xd, yd)
        assert xn == pytest.approx(0.5, abs=1e-8)
        assert yn == pytest.approx(0.0, abs=1e-8)

    def test_undistort_origin(self):
        d = DistortionCoeffs(k1=0.3, p1=0.01)
        assert undistort_normalized(d, 0.0, 0.0) == (0.0, 0.0)

    def test_undistort_nonconvergence_raises(self):
        d = DistortionCoeffs(k1=-2.0)
        with pytest.raises(ValueError, match="did not converge"):
            undistort_normalized(d, 1.5, 0.0)

    def test_undistort_array_input(self):
        d = DistortionCoeffs(k1=-0.1, p1=0.005)
        xn = np.linspace(-0.5, 0.5, 11)
        yn = np.linspace(0.4, -0.4, 11)
        xd, yd = distort_normalized(d, xn, yn)
        xr, yr = undistort_normalized(d, xd, yd)
        assert np.abs(xr - xn).max() < 1e-8
        assert np.abs(yr - yn).max() < 1e-8

    @settings(max_examples=200, deadline=None)
    @given(
        xn=st.floats(-0.6, 0.6),
        yn=st.floats(-0.6, 0.6),
        k1=st.floats(-0.3, 0.3),
        k2=st.floats(-0.1, 0.1),
        p1=st.floats(-0.01, 0.01),
        p2=st.floats(-0.01, 0.01),
    )
    def test_roundtrip_property(self, xn, yn, k1, k2, p1, p2):
        d = DistortionCoeffs(k1=k1, k2=k2, p1=p1, p2=p2)
        xr, yr = undistort_normalized(d, *distort_normalized(d, xn, yn))
        assert abs(xr - xn) < 1e-8
        assert abs(yr - yn) < 1e-8


class TestProject:
    def test_optical_axis(self):
        cam = simple_camera()
        assert project(cam, (0, 0, 1)) == (50.0, 50.0)

    def test_hand_value(self):
        cam = simple_camera()
        assert project(cam, (0.5, 0, 1)) == (100.0, 50.0)

    def test_behind_camera_absent(self):
        cam = simple_camera()
        assert project(cam, (0, 0, -1)) is None

    def test_z_min_cutoff(self):
        cam = simple_camera()
        assert project(cam, (0, 0, 1e-6)) is None
        assert project(cam, (0, 0, 2e-6)) is not None

    def test_out_of_bounds_pixel_still_returned(self):
        cam = simple_camera()
        u, v = project(cam, (5.0, 0.0, 1.0))
        assert u == 550.0

    def test_scale_invariance_identity_pose(self):
        cam = simple_camera(dist=DistortionCoeffs(k1=-0.05, p1=0.002))
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = rng.uniform(-1, 1, 3)
            p[2] = rng.uniform(0.5, 10.0)
            s = rng.uniform(0.1, 10.0)
            base = project(cam, p, use_distortion=True)
            scaled = project(cam, s * p, use_distortion=True)
            assert base is not None and scaled is not None
            assert abs(base[0] - scaled[0]) < 1e-9
            assert abs(base[1] - scaled[1]) < 1e-9

    def test_project_points_matches_scalar(self):
        rng = np.random.default_rng(11)
        pose = ExtrinsicPose(random_rotation(rng), rng.normal(size=3))
        cam = simple_camera(dist=DistortionCoeffs(k1=0.1, k2=-0.02, p1=0.003, p2=-0.001), pose=pose)
        pts = rng.uniform(-20, 20, size=(200, 3))
        uv, in_front = project_points(cam, pts, use_distortion=True)
        for i in range(len(pts)):
            single = project(cam, pts[i], use_distortion=True)
            if single is None:
                assert not in_front[i]
            else:
                assert in_front[i]
                assert single == (uv[i, 0], uv[i, 1])

    def test_behind_camera_mask_vectorized(self):
        cam = simple_camera()
        pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
        uv, in_front = project_points(cam, pts)
        assert in_front.tolist() == [True, False, False]
        assert np.isnan(uv[1]).all() and np.isnan(uv[2]).all()

    def test_nan_depth_is_absent(self):
        cam = simple_camera()
        uv, in_front = project_points(cam, np.array([[0.0, 0.0, math.nan]]))
        assert not in_front[0]
        assert np.isnan(uv[0]).all()
