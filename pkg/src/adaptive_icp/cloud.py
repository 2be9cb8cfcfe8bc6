"""Point-cloud container and per-point geometry.

Neighbor queries run on a frozen kd-tree; densities, covariances, and
normals are computed in vectorized passes so per-frame preprocessing stays
within a real-time budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyCloudError,
    NonPositiveRadiusError,
    NonPositiveVoxelError,
    TooFewPointsError,
)

# Two near-equal smallest covariance eigenvalues leave the normal direction
# undetermined; such points are flagged and skipped by plane residuals.
_DEGENERATE_EIG_GAP = 1e-12


@dataclass(frozen=True)
class PointCloud:
    """Points with optional per-point covariance, normal, and density attributes.

    Attribute arrays, when present, run parallel to `points`. Instances are
    treated as immutable; derived clouds are new objects.
    """

    points: np.ndarray
    covariances: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    densities: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        for name, width in (("covariances", (3, 3)), ("normals", (3,)), ("densities", ()), ("degenerate", ())):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr)
            if arr.shape != (n, *width):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(n, *width)}")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.points)

    def select(self, mask_or_indices) -> "PointCloud":
        """New cloud restricted to the given rows, attributes in lockstep."""
        keep = lambda a: None if a is None else a[mask_or_indices]
        return PointCloud(
            self.points[mask_or_indices],
            covariances=keep(self.covariances),
            normals=keep(self.normals),
            densities=keep(self.densities),
            degenerate=keep(self.degenerate),
        )

    def with_attributes(self, **kwargs) -> "PointCloud":
        return replace(self, **kwargs)


class NeighborIndex:
    """Spatial index over a frozen cloud; reports squared distances."""

    def __init__(self, points: np.ndarray):
        self._points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self._points)

    def knn(self, queries: np.ndarray, k: int):
        """(squared distances, indices), both (n, k)."""
        queries = np.atleast_2d(queries)
        d, idx = self._tree.query(queries, k=k, workers=-1)
        d = d.reshape(len(queries), k)
        idx = idx.reshape(len(queries), k)
        return d * d, idx

    def nearest(self, queries: np.ndarray):
        """(squared distance, index) of the single nearest point, both (n,)."""
        d, idx = self._tree.query(np.atleast_2d(queries), k=1, workers=-1)
        return d * d, idx

    def radius_counts(self, queries: np.ndarray, r: float) -> np.ndarray:
        """Number of indexed points within distance r (inclusive) of each query."""
        return self._tree.query_ball_point(np.atleast_2d(queries), r, return_length=True, workers=-1)

    def radius(self, query: np.ndarray, r: float):
        """(index, squared distance) pairs within r of one query point."""
        idx = self._tree.query_ball_point(np.asarray(query, dtype=np.float64), r)
        diffs = self._points[idx] - query
        return list(zip(idx, np.einsum("ij,ij->i", diffs, diffs)))


def build_index(cloud: PointCloud) -> NeighborIndex:
    if len(cloud) == 0:
        raise EmptyCloudError("cannot index an empty cloud")
    if not np.all(np.isfinite(cloud.points)):
        raise ValueError("cloud contains non-finite coordinates")
    return NeighborIndex(cloud.points)


def compute_densities(cloud: PointCloud, r: float, index: Optional[NeighborIndex] = None) -> np.ndarray:
    """Per-point neighbor count within radius r, boundary inclusive, self counted."""
    if r <= 0:
        raise NonPositiveRadiusError(f"radius must be positive, got {r}")
    index = index or build_index(cloud)
    return np.asarray(index.radius_counts(cloud.points, r), dtype=np.int64)


def _nearest_rank_percentile(values: np.ndarray, alpha: float):
    """alpha-percentile by the nearest-rank method (1-based ceil rank)."""
    ordered = np.sort(values)
    rank = int(np.ceil(alpha / 100.0 * len(ordered)))
    rank = min(max(rank, 1), len(ordered))
    return ordered[rank - 1]


def density_filter(cloud: PointCloud, r: float, alpha: float) -> PointCloud:
    """Drop points whose neighbor count falls below the alpha-percentile.

    Output is a subsequence of the input (ordering preserved) and is never
    empty: the threshold is itself an attained density. The surviving cloud
    carries its density column.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot filter an empty cloud")
    densities = compute_densities(cloud, r)
    threshold = _nearest_rank_percentile(densities, alpha)
    mask = densities >= threshold
    return cloud.with_attributes(densities=densities).select(mask)


def _knn_covariances(points: np.ndarray, k: int, index: NeighborIndex):
    _, idx = index.knn(points, k)
    neighbors = points[idx]  # (n, k, 3)
    means = neighbors.mean(axis=1)
    centered = neighbors - means[:, None, :]
    return np.einsum("nki,nkj->nij", centered, centered) / k


def compute_covariances(cloud: PointCloud, k: int, index: Optional[NeighborIndex] = None) -> PointCloud:
    """Populate per-point covariances over the k nearest neighbors.

    The neighbor set includes the point itself and the divisor is exactly k
    (population form).
    """
    if k < 3:
        raise TooFewPointsError(f"k must be at least 3, got {k}")
    if len(cloud) < k:
        raise TooFewPointsError(f"cloud has {len(cloud)} points, need at least {k}")
    index = index or build_index(cloud)
    return cloud.with_attributes(covariances=_knn_covariances(cloud.points, k, index))


def compute_normals(
    cloud: PointCloud,
    k: int,
    viewpoint: np.ndarray,
    index: Optional[NeighborIndex] = None,
) -> PointCloud:
    """Populate unit normals from the smallest-eigenvalue direction of the
    k-NN covariance, oriented toward `viewpoint`.

    Points whose two smallest covariance eigenvalues coincide get their
    `degenerate` flag set; downstream plane residuals skip them. Reuses
    stored covariances when present.
    """
    if k < 3:
        raise TooFewPointsError(f"k must be at least 3, got {k}")
    if len(cloud) < k:
        raise TooFewPointsError(f"cloud has {len(cloud)} points, need at least {k}")
    if cloud.covariances is not None:
        covs = cloud.covariances
    else:
        covs = _knn_covariances(cloud.points, k, index or build_index(cloud))
    eigvals, eigvecs = np.linalg.eigh(covs)  # ascending eigenvalues
    normals = eigvecs[:, :, 0]
    degenerate = (eigvals[:, 1] - eigvals[:, 0]) <= _DEGENERATE_EIG_GAP

    to_view = np.asarray(viewpoint, dtype=np.float64).reshape(3) - cloud.points
    flip = np.einsum("ij,ij->i", normals, to_view) < 0.0
    normals = np.where(flip[:, None], -normals, normals)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(norms == 0.0, 1.0, norms)
    return cloud.with_attributes(normals=normals, degenerate=degenerate)


def _pack_cells(keys: np.ndarray) -> np.ndarray:
    """Collapse integer cell coordinates into one int64 per cell.

    21 bits per axis covers +-1e6 cells, far beyond any sensor range at the
    voxel sizes in use; packing keeps the grouping on a flat int array.
    """
    if np.any(np.abs(keys) >= (1 << 20)):
        raise ValueError("voxel coordinates exceed packing range")
    return (keys[:, 0] << 42) | ((keys[:, 1] & 0x1FFFFF) << 21) | (keys[:, 2] & 0x1FFFFF)


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """At most one point per voxel cell: the point nearest its cell center,
    ties broken by lowest input index. Cells are ordered by first occurrence,
    so the result is deterministic for a given input order."""
    if voxel <= 0:
        raise NonPositiveVoxelError(f"voxel size must be positive, got {voxel}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    packed = _pack_cells(keys)
    _, first_pos, inverse = np.unique(packed, return_index=True, return_inverse=True)
    centers = (keys + 0.5) * voxel
    dist2 = np.einsum("ij,ij->i", cloud.points - centers, cloud.points - centers)

    # Lowest (distance, index) per cell; lexsort keys are least-significant first.
    order = np.lexsort((np.arange(len(cloud)), dist2, inverse))
    cell_of_sorted = inverse[order]
    first_in_cell = np.ones(len(order), dtype=bool)
    first_in_cell[1:] = cell_of_sorted[1:] != cell_of_sorted[:-1]
    winners = order[first_in_cell]

    # Report cells in order of first appearance in the input.
    winners = winners[np.argsort(first_pos, kind="stable")]
    return cloud.select(winners)
