import math

import numpy as np
import pytest

from synthscene.camera import (
    default_rig,
    ground_hits,
    project_points,
    project_to_camera,
    unproject_to_ground,
)


@pytest.fixture
def rig():
    return default_rig()


def test_rotations_orthonormal(rig):
    for cam in rig:
        np.testing.assert_allclose(cam.rotation.T @ cam.rotation, np.eye(3), atol=1e-12)
        assert np.linalg.det(cam.rotation) == pytest.approx(1.0)


def test_rig_covers_all_azimuths(rig):
    for deg in range(0, 360, 5):
        a = math.radians(deg)
        pt = np.array([10 * math.sin(a), 10 * math.cos(a), 1.6])
        assert any(project_to_camera(pt, cam) is not None for cam in rig), deg


@pytest.mark.parametrize("depth", [0.5, 3.0, 40.0])
def test_optical_axis_hits_principal_point(rig, depth):
    cam = rig[1]
    pt = cam.translation + depth * cam.rotation[:, 2]
    u, v = project_to_camera(pt, cam)
    assert u == pytest.approx(cam.cx)
    assert v == pytest.approx(cam.cy)


def test_behind_and_too_close_are_none(rig):
    cam = rig[0]
    assert project_to_camera(np.array([0.0, -5.0, 1.6]), cam) is None
    assert project_to_camera(np.array([0.0, 0.05, 1.6]), cam) is None


def test_unproject_then_project_roundtrip(rig):
    for cam in rig:
        uv = np.stack(np.meshgrid(np.linspace(0.5, cam.cols - 0.5, 13), np.linspace(cam.cy + 0.5, cam.rows - 0.5, 9)), axis=-1).reshape(-1, 2)
        for pixel in uv:
            ground = unproject_to_ground(pixel, cam)
            assert ground is not None
            back = project_to_camera(np.array([ground[0], ground[1], 0.0]), cam)
            assert back is not None
            np.testing.assert_allclose(back, pixel, atol=1e-3)


def test_horizon_rays_miss_ground(rig):
    cam = rig[0]
    assert unproject_to_ground((10.0, cam.cy), cam) is None
    assert unproject_to_ground((10.0, 3.0), cam) is None
    _, hit = ground_hits(cam)
    hit = hit.reshape(cam.rows, cam.cols)
    assert not hit[: cam.rows // 2].any()
    assert hit[cam.rows // 2:].all()


def test_project_points_vectorised_matches_scalar(rig):
    pts = np.random.default_rng(0).uniform(-20, 20, size=(50, 3))
    for cam in rig[:2]:
        uv, ok = project_points(pts, cam)
        for p, row, good in zip(pts, uv, ok):
            single = project_to_camera(p, cam)
            assert (single is not None) == good
            if good:
                np.testing.assert_allclose(single, row)


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
