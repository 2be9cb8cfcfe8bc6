import numpy as np
import pytest

from adaptive_icp import PointCloud, Pose, se3
from adaptive_icp.errors import EmptyMapError
from adaptive_icp.local_map import LocalMap

from scenes import prepared_cloud, random_pose, three_plane_points


def normal_cloud(points):
    n = len(points)
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    return PointCloud(points, normals=normals)


def test_insert_counts_and_snapshot_roundtrip():
    rng = np.random.default_rng(90)
    pts = rng.uniform(0, 5, size=(200, 3))
    m = LocalMap(1.0, 20, 100.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    assert len(m) == 200
    snap = m.snapshot()
    got = {tuple(np.round(p, 12)) for p in snap.cloud.points.tolist()}
    assert got == {tuple(np.round(p, 12)) for p in pts.tolist()}
    # every inserted point retrievable at its exact coordinate
    d2, _ = snap.index.nearest(pts)
    assert np.allclose(d2, 0.0)


def test_insert_respects_voxel_cap_first_come():
    rng = np.random.default_rng(91)
    pts = 0.2 + 0.6 * rng.uniform(size=(30, 3))  # one cell at voxel 1.0
    m = LocalMap(1.0, 5, 100.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    assert len(m) == 5
    snap = m.snapshot()
    assert np.array_equal(snap.cloud.points, pts[:5])


def test_second_identical_insert_adds_nothing_when_full():
    rng = np.random.default_rng(92)
    pts = 0.1 + 0.8 * rng.uniform(size=(10, 3))
    m = LocalMap(1.0, 10, 100.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    count = len(m)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    assert len(m) == count


def test_floor_semantics_of_cell_keys():
    m = LocalMap(1.0, 5, 100.0)
    m.insert_frame(normal_cloud(np.array([[0.49, 0.0, 0.0], [-0.01, 0.0, 0.0]])), Pose.identity())
    assert set(m.cell_keys()) == {(0, 0, 0), (-1, 0, 0)}


def test_insert_transforms_points_normals_covariances():
    rng = np.random.default_rng(93)
    pts = three_plane_points(rng, n=300, noise=0.005)
    frame = prepared_cloud(pts, k=8)
    T = random_pose(rng, 0.6, 5.0)
    m = LocalMap(1.0, 50, 1000.0)
    m.insert_frame(frame, T)
    snap = m.snapshot()
    # rows keep insertion order here (no cap hit with 50 per voxel)
    assert np.allclose(snap.cloud.points, se3.transform_points(T, frame.points), atol=1e-12)
    assert np.allclose(snap.cloud.normals, frame.normals @ T.rotation.T, atol=1e-12)
    expected_cov = np.einsum("ij,njk,lk->nil", T.rotation, frame.covariances, T.rotation)
    assert np.allclose(snap.cloud.covariances, expected_cov, atol=1e-12)


def test_prune_keeps_cells_in_range_and_matches_brute_force():
    rng = np.random.default_rng(94)
    pts = rng.uniform(-40, 40, size=(2000, 3))
    m = LocalMap(2.0, 10, 25.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    center = np.array([5.0, -3.0, 2.0])

    expected = {
        key
        for key in m.cell_keys()
        if np.linalg.norm((np.array(key) + 0.5) * 2.0 - center) <= 25.0
    }
    m.prune(center)
    assert set(m.cell_keys()) == expected


def test_prune_all_in_range_is_noop():
    rng = np.random.default_rng(95)
    pts = rng.uniform(0, 5, size=(100, 3))
    m = LocalMap(1.0, 20, 1000.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    before = len(m)
    m.prune(np.zeros(3))
    assert len(m) == before


def test_prune_far_center_empties_map():
    rng = np.random.default_rng(96)
    pts = rng.uniform(0, 5, size=(100, 3))
    m = LocalMap(1.0, 20, 10.0)
    m.insert_frame(normal_cloud(pts), Pose.identity())
    m.prune(np.array([100.0, 0.0, 0.0]))
    assert len(m) == 0
    with pytest.raises(EmptyMapError):
        m.snapshot()


def test_point_count_bounded_by_cells_times_cap():
    rng = np.random.default_rng(97)
    m = LocalMap(1.0, 3, 100.0)
    for _ in range(5):
        pts = rng.uniform(0, 4, size=(500, 3))
        m.insert_frame(normal_cloud(pts), Pose.identity())
    assert len(m) <= m.num_cells() * 3


def test_snapshot_consistent_after_prune_compaction():
    rng = np.random.default_rng(98)
    m = LocalMap(1.0, 10, 6.0)
    a = rng.uniform(0, 4, size=(300, 3))
    b = rng.uniform(30, 34, size=(300, 3))
    m.insert_frame(normal_cloud(a), Pose.identity())
    m.insert_frame(normal_cloud(b), Pose.identity())
    m.prune(np.array([2.0, 2.0, 2.0]))  # drops the far block, triggers compaction
    snap = m.snapshot()
    assert len(snap.cloud) == len(m)
    assert snap.cloud.points.max() < 10.0
    d2, _ = snap.index.nearest(snap.cloud.points)
    assert np.allclose(d2, 0.0)
