"""Adaptive point-to-plane registration from a scan to the local map.

Residuals are signed distances along target normals; each one carries a
weight threshold^2 / (threshold^2 + residual^2) driven by the adaptive
threshold, so outliers fade without a hard kernel cutoff. The damped
normal-equation update is applied left-multiplicatively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import PointCloud
from .errors import DivergedTransformError, NoCorrespondencesError, SingularSystemError
from .local_map import MapSnapshot
from .se3 import NormalEquations, Pose

_COST_RETRIES = 5


@dataclass(frozen=True)
class PlanarResiduals:
    """Point-to-plane matches in structure-of-arrays form.

    Source points are untransformed so residuals can be re-evaluated at
    trial poses; `residuals` and `weights` are as built at the match pose.
    """

    source_indices: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    normals: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.source_indices)


@dataclass(frozen=True)
class FineResult:
    transform: Pose
    iterations: int
    converged: bool
    final_cost: float
    inlier_count: int


def adaptive_weight(residual: float, threshold: float):
    """threshold^2 / (threshold^2 + residual^2), in (0, 1]."""
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    t2 = threshold * threshold
    return t2 / (t2 + np.square(residual))


def build_planar_residuals(
    source: PointCloud,
    snapshot: MapSnapshot,
    T: Pose,
    sigma_th: float,
    min_gate: float,
) -> PlanarResiduals:
    """Match transformed source points to their nearest map points.

    Pairs farther apart than max(3 * sigma_th, min_gate) or whose target
    normal is flagged degenerate are discarded.
    """
    if sigma_th <= 0:
        raise ValueError(f"sigma_th must be positive, got {sigma_th}")
    target = snapshot.cloud
    if target.normals is None:
        raise ValueError("map snapshot must carry normals")
    source_points = source.points
    transformed = se3.transform_points(T, source_points)
    dist2, nn = snapshot.index.nearest(transformed)
    gate = max(3.0 * sigma_th, min_gate)
    mask = dist2 <= gate * gate
    if target.degenerate is not None:
        mask &= ~target.degenerate[nn]
    if not np.any(mask):
        raise NoCorrespondencesError("no pair within the plane-residual gate")

    src_idx = np.nonzero(mask)[0]
    tgt_idx = nn[mask]
    normals = target.normals[tgt_idx]
    residuals = np.einsum("ni,ni->n", transformed[mask] - target.points[tgt_idx], normals)
    return PlanarResiduals(
        source_indices=src_idx,
        source_points=source_points[src_idx],
        target_points=target.points[tgt_idx],
        normals=normals,
        residuals=residuals,
        weights=adaptive_weight(residuals, sigma_th),
    )


def residual_cost(res: PlanarResiduals, T: Pose) -> float:
    """Sum of w * e^2 with weights frozen and residuals re-evaluated at T."""
    e = np.einsum("ni,ni->n", se3.transform_points(T, res.source_points) - res.target_points, res.normals)
    return float(np.sum(res.weights * e * e))


def accumulate_plane_equations(res: PlanarResiduals, T: Pose) -> NormalEquations:
    """Weighted 6x6 system from the scalar plane residuals at pose T.

    Each residual row is n^T [S(p'), -I] = [cross(n, p'), -n]; the gradient
    accumulates those rows scaled by the weighted residuals.
    """
    if len(res) == 0:
        raise NoCorrespondencesError("cannot accumulate an empty residual set")
    transformed = se3.transform_points(T, res.source_points)
    e = np.einsum("ni,ni->n", transformed - res.target_points, res.normals)
    rows = np.concatenate([np.cross(res.normals, transformed), -res.normals], axis=1)
    weighted = res.weights[:, None] * rows
    H = weighted.T @ rows
    b = weighted.T @ e
    H = 0.5 * (H + H.T)
    return NormalEquations(H, b)


def fine_register(
    source: PointCloud,
    snapshot: MapSnapshot,
    T_init: Pose,
    sigma_th: float,
    cfg,
) -> FineResult:
    """Iterate plane-residual rebuilds and damped solves from T_init.

    Weights are recomputed with each residual rebuild and frozen inside the
    solve. Cost-increasing steps back off by multiplying the damping by 10,
    up to five retries, after which the loop exits.
    """
    T = T_init
    iterations = 0
    converged = False
    cost = 0.0
    inliers = 0
    for _ in range(cfg.fine_max_iters):
        res = build_planar_residuals(source, snapshot, T, sigma_th, cfg.min_gate)
        inliers = len(res)
        iterations += 1
        ne = accumulate_plane_equations(res, T)
        cost = residual_cost(res, T)

        lam = cfg.lm_lambda
        accepted = None
        for _ in range(_COST_RETRIES + 1):
            try:
                dx = se3.solve_damped(ne, lam)
            except SingularSystemError:
                lam *= 10.0
                continue
            T_trial = se3.compose(se3.exp_map(dx), T)
            trial_cost = residual_cost(res, T_trial)
            if trial_cost <= cost:
                accepted = (T_trial, dx, trial_cost)
                break
            lam *= 10.0
        if accepted is None:
            break
        T, dx, cost = accepted

        if np.linalg.norm(T.translation - T_init.translation) > cfg.max_translation:
            raise DivergedTransformError(
                f"translation moved more than {cfg.max_translation} m from the initial pose"
            )
        if dx.norm() < cfg.fine_tol:
            converged = True
            break
    return FineResult(T, iterations, converged, cost, inliers)
