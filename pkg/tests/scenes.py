"""Synthetic scene generators shared across the test modules.

Every generator takes an explicit RNG so tests stay reproducible, and each
returns enough ground truth to act as its own oracle.
"""

from __future__ import annotations

import numpy as np

from adaptive_icp import (
    PointCloud,
    Pose,
    Twist,
    build_index,
    compute_covariances,
    compute_normals,
    exp_map,
)
from adaptive_icp import se3
from adaptive_icp.local_map import MapSnapshot


def rot_axis(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return exp_map(Twist(axis * angle, np.zeros(3))).rotation


def random_pose(rng, max_angle, max_trans):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0, max_angle)
    trans = rng.uniform(-max_trans, max_trans, size=3)
    return Pose(rot_axis(axis, angle), trans)


def three_plane_points(rng, n=3000, extent=10.0, noise=0.01):
    """Points on three mutually orthogonal planes meeting at the origin."""
    per = n // 3
    chunks = []
    for axis in range(3):
        u = rng.uniform(0.0, extent, size=(per, 2))
        p = np.zeros((per, 3))
        others = [i for i in range(3) if i != axis]
        p[:, others[0]] = u[:, 0]
        p[:, others[1]] = u[:, 1]
        chunks.append(p)
    pts = np.concatenate(chunks)
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    return pts


def prepared_cloud(points, k=10, viewpoint=(3.0, 3.0, 3.0)) -> PointCloud:
    cloud = PointCloud(points)
    cloud = compute_covariances(cloud, k)
    return compute_normals(cloud, k, np.asarray(viewpoint, dtype=float))


def snapshot_of(points, k=10, viewpoint=(3.0, 3.0, 3.0)) -> MapSnapshot:
    cloud = prepared_cloud(points, k, viewpoint)
    return MapSnapshot(cloud, build_index(cloud))


def displaced_copy(points, displacement: Pose):
    """Points as seen from a sensor displaced by `displacement`: registering
    the result back onto `points` recovers `displacement`."""
    return se3.transform_points(se3.inverse(displacement), points)


# ---------------------------------------------------------------------------
# Corridor world for pipeline tests
# ---------------------------------------------------------------------------

_CORRIDOR_HALF_WIDTH = 3.0
_CORRIDOR_HEIGHT = 3.0
_FRAME_SPACING = 4.0  # door frames every 4 m give the x direction structure
_SENSOR_HEIGHT = 1.0


def _corridor_surface_samples(rng, n, x_lo, x_hi):
    """World-frame samples on floor, walls, and door frames within [x_lo, x_hi]."""
    w, h = _CORRIDOR_HALF_WIDTH, _CORRIDOR_HEIGHT
    n_floor = n // 3
    n_wall = n // 4
    floor = np.column_stack([
        rng.uniform(x_lo, x_hi, n_floor),
        rng.uniform(-w, w, n_floor),
        np.zeros(n_floor),
    ])
    walls = []
    for side in (-w, w):
        wall = np.column_stack([
            rng.uniform(x_lo, x_hi, n_wall),
            np.full(n_wall, side),
            rng.uniform(0.0, h, n_wall),
        ])
        walls.append(wall)
    n_frames = n - n_floor - 2 * n_wall
    frame_xs = np.arange(np.ceil(x_lo / _FRAME_SPACING), np.floor(x_hi / _FRAME_SPACING) + 1) * _FRAME_SPACING
    if len(frame_xs) == 0:
        frame_xs = np.array([0.0])
    xs = rng.choice(frame_xs, size=n_frames)
    side = np.where(rng.uniform(size=n_frames) < 0.5, -1.0, 1.0)
    ys = side * rng.uniform(w - 0.8, w, n_frames)
    door = np.column_stack([xs, ys, rng.uniform(0.0, h, n_frames)])
    return np.concatenate([floor] + walls + [door])


def corridor_ground_truth(n_frames, step=0.5):
    """World poses of a sensor advancing along +x at constant speed."""
    poses = []
    for i in range(n_frames):
        poses.append(Pose(np.eye(3), np.array([i * step, 0.0, _SENSOR_HEIGHT])))
    return poses


def corridor_scan(pose: Pose, seed: int, n=1800, noise=0.01, sensor_range=12.0):
    """Sensor-frame scan of the corridor surfaces around the given pose."""
    rng = np.random.default_rng(seed)
    x_s = pose.translation[0]
    world = _corridor_surface_samples(rng, n, x_s - sensor_range, x_s + sensor_range)
    local = se3.transform_points(se3.inverse(pose), world)
    return PointCloud(local + rng.normal(scale=noise, size=local.shape))


def corrupted_scan(pose: Pose, seed: int, blob_center, n=1800, noise=0.01):
    """Scan where 80 percent of the points form a dense off-structure blob.

    The blob swamps the density percentile so filtering drops the real
    structure, which makes coarse registration fail by construction.
    """
    rng = np.random.default_rng(seed)
    clean = corridor_scan(pose, seed + 10_000, n=n // 5, noise=noise)
    n_blob = n - len(clean)
    direction = rng.normal(size=(n_blob, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = 2.0 * rng.uniform(size=n_blob) ** (1.0 / 3.0)
    blob = np.asarray(blob_center, dtype=float) + direction * radius[:, None]
    return PointCloud(np.concatenate([clean.points, blob]))
