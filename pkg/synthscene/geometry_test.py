import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from synthscene.geometry import (
    PERCEPTION_RANGE,
    cell_of,
    point_to_polyline_distance,
    polyline_length,
    relative_pose,
    resample_polyline,
    split_runs,
    to_local,
    to_world,
)

polylines = arrays(np.float64, st.tuples(st.integers(2, 8), st.just(2)), elements=st.floats(-20, 20))


@given(polylines, st.integers(2, 12))
@settings(max_examples=60, deadline=None)
def test_resample_reversal_is_exact(poly, n):
    np.testing.assert_array_equal(resample_polyline(poly[::-1], n), resample_polyline(poly, n)[::-1])


def test_resample_equal_spacing_keeps_endpoints():
    poly = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    out = resample_polyline(poly, 8)
    np.testing.assert_array_equal(out[0], poly[0])
    np.testing.assert_array_equal(out[-1], poly[-1])
    # the corner lies exactly on a sample
    np.testing.assert_allclose(np.linalg.norm(np.diff(out, axis=0), axis=1), 1.0)
    assert polyline_length(poly) == pytest.approx(7.0)


def test_point_to_polyline_distance():
    poly = np.array([[0.0, 0.0], [10.0, 0.0]])
    d = point_to_polyline_distance(np.array([[5.0, 2.0], [-3.0, 4.0], [12.0, 0.0]]), poly)
    np.testing.assert_allclose(d, [2.0, 5.0, 2.0])


def test_pose_roundtrip():
    pose = np.array([1.0, -2.0, 0.4])
    pts = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_allclose(to_local(to_world(pts, pose), pose), pts, atol=1e-12)


def test_relative_pose_forward_motion():
    motion = relative_pose(np.array([0.0, 0.0, 0.0]), np.array([0.0, 1.5, 0.0]))
    np.testing.assert_allclose(motion, [0.0, 1.5, 0.0])
    turned = relative_pose(np.array([0.0, 0.0, np.pi / 2]), np.array([-1.0, 0.0, np.pi / 2]))
    np.testing.assert_allclose(turned, [0.0, 1.0, 0.0], atol=1e-12)


def test_split_runs():
    pts = np.arange(8)
    runs = split_runs(pts, np.array([1, 1, 0, 1, 0, 1, 1, 1], dtype=bool))
    assert [list(r) for r in runs] == [[0, 1], [5, 6, 7]]


@pytest.mark.parametrize("point, cell", [
    ((0.0, 0.0), (50, 25)),
    ((-15.0, -30.0), (0, 0)),
    ((15.0 - 1e-9, 30.0 - 1e-9), (99, 49)),
])
def test_cell_of(point, cell):
    row, col = cell_of(np.array(point), PERCEPTION_RANGE, 100, 50)
    assert (row[0], col[0]) == cell


if __name__ == "__main__":
    pytest.main(["-sv", __file__])
