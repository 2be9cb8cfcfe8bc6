"""Voxel-hashed local map of registered scans in the world frame.

Each cell retains its first arrivals up to a cap; normals and covariances
are rotated into the world frame on insert rather than recomputed on the
sparse map. Snapshots flatten the live points into an indexed cloud that
stays valid for one frame's registration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import NeighborIndex, PointCloud, build_index
from .errors import EmptyMapError
from .se3 import Pose

_COMPACT_DEAD_FRACTION = 0.5


@dataclass(frozen=True)
class MapSnapshot:
    """Immutable flattened view of the map with its neighbor index."""

    cloud: PointCloud
    index: NeighborIndex


class LocalMap:
    """World-frame point store hashed by integer voxel coordinate."""

    def __init__(self, voxel_size: float, max_points_per_voxel: int, max_range: float):
        if voxel_size <= 0:
            raise ValueError(f"voxel_size must be positive, got {voxel_size}")
        self.voxel_size = voxel_size
        self.max_points_per_voxel = max_points_per_voxel
        self.max_range = max_range
        self._cells: dict = {}  # key -> list of row indices into the arrays below
        self._points = np.empty((0, 3))
        self._normals = np.empty((0, 3))
        self._covariances = np.empty((0, 3, 3))
        self._degenerate = np.empty(0, dtype=bool)
        self._alive = np.empty(0, dtype=bool)

    def __len__(self) -> int:
        return int(np.count_nonzero(self._alive))

    def num_cells(self) -> int:
        return len(self._cells)

    def cell_keys(self):
        return list(self._cells.keys())

    def insert_frame(self, frame: PointCloud, T_world: Pose) -> None:
        """Insert a sensor-frame scan at the given world pose.

        The frame must carry normals; covariances and the degenerate flags
        are optional but kept when present (coarse registration against the
        map needs covariances). Full cells ignore new arrivals.
        """
        if frame.normals is None:
            raise ValueError("frame must carry normals before map insertion")
        R = T_world.rotation
        points = se3.transform_points(T_world, frame.points)
        normals = frame.normals @ R.T
        if frame.covariances is not None:
            covariances = np.einsum("ij,njk,lk->nil", R, frame.covariances, R)
        else:
            covariances = np.zeros((len(frame), 3, 3))
        degenerate = (
            frame.degenerate if frame.degenerate is not None else np.zeros(len(frame), dtype=bool)
        )

        keys = np.floor(points / self.voxel_size).astype(np.int64)
        accepted = []
        base = len(self._points)
        for i, key in enumerate(map(tuple, keys)):
            rows = self._cells.setdefault(key, [])
            if len(rows) < self.max_points_per_voxel:
                rows.append(base + len(accepted))
                accepted.append(i)
        if not accepted:
            return
        sel = np.array(accepted)
        self._points = np.concatenate([self._points, points[sel]])
        self._normals = np.concatenate([self._normals, normals[sel]])
        self._covariances = np.concatenate([self._covariances, covariances[sel]])
        self._degenerate = np.concatenate([self._degenerate, degenerate[sel]])
        self._alive = np.concatenate([self._alive, np.ones(len(sel), dtype=bool)])

    def prune(self, center: np.ndarray) -> None:
        """Drop every cell whose center lies farther than max_range from
        `center`."""
        center = np.asarray(center, dtype=np.float64).reshape(3)
        doomed = []
        for key, rows in self._cells.items():
            cell_center = (np.array(key) + 0.5) * self.voxel_size
            if np.linalg.norm(cell_center - center) > self.max_range:
                doomed.append(key)
        for key in doomed:
            for row in self._cells.pop(key):
                self._alive[row] = False
        if len(self._alive) and np.count_nonzero(~self._alive) > _COMPACT_DEAD_FRACTION * len(self._alive):
            self._compact()

    def _compact(self) -> None:
        remap = np.cumsum(self._alive) - 1
        keep = self._alive
        self._points = self._points[keep]
        self._normals = self._normals[keep]
        self._covariances = self._covariances[keep]
        self._degenerate = self._degenerate[keep]
        self._alive = np.ones(len(self._points), dtype=bool)
        for key, rows in self._cells.items():
            self._cells[key] = [int(remap[r]) for r in rows]

    def snapshot(self) -> MapSnapshot:
        """Flattened live points with a fresh neighbor index."""
        if len(self) == 0:
            raise EmptyMapError("local map holds no points")
        keep = self._alive
        cloud = PointCloud(
            self._points[keep],
            covariances=self._covariances[keep],
            normals=self._normals[keep],
            degenerate=self._degenerate[keep],
        )
        return MapSnapshot(cloud, build_index(cloud))
