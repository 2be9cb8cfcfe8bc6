"""Distributed coarse registration with density filtering.

Correspondence errors are weighted by the inverse of the summed local
covariances of their endpoints, an exponential of that squared distance
down-weights outlying pairs, and a damped normal-equation iteration with a
left-multiplicative exponential update produces the coarse alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .cloud import NeighborIndex, PointCloud
from .errors import (
    DivergedTransformError,
    MissingCovariancesError,
    NoCorrespondencesError,
    SingularSystemError,
)
from .se3 import NormalEquations, Pose

# Added to the joint covariance before inversion; planar or linear
# neighborhoods make C_m + C_n singular.
_JOINT_COV_EPS = 1e-6

_COST_RETRIES = 5


@dataclass(frozen=True)
class Correspondences:
    """Matched pairs in structure-of-arrays form.

    `errors` holds target minus transformed-source at the pose the match was
    built with; `joint_covs` are already regularized. Source points are kept
    untransformed so the set can be re-evaluated at trial poses during
    damping backoff.
    """

    source_indices: np.ndarray
    target_indices: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    errors: np.ndarray
    joint_covs: np.ndarray
    weights: np.ndarray
    joint_cov_invs: np.ndarray = None

    def __post_init__(self):
        if self.joint_cov_invs is None:
            object.__setattr__(self, "joint_cov_invs", np.linalg.inv(self.joint_covs))

    def __len__(self) -> int:
        return len(self.source_indices)


@dataclass(frozen=True)
class CoarseResult:
    transform: Pose
    iterations: int
    converged: bool
    final_weighted_cost: float
    correspondence_count: int


def find_correspondences(
    source: PointCloud,
    target: PointCloud,
    target_index: NeighborIndex,
    T: Pose,
    sigma: float,
    max_dist: float,
) -> Correspondences:
    """Nearest-neighbor pairs within max_dist, with covariance-weighted
    squared errors turned into exponential weights exp(-d^2 / (2 sigma^2))."""
    if source.covariances is None or target.covariances is None:
        raise MissingCovariancesError("both clouds must carry covariances")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")

    transformed = se3.transform_points(T, source.points)
    dist2, nn = target_index.nearest(transformed)
    mask = dist2 <= max_dist * max_dist
    if not np.any(mask):
        raise NoCorrespondencesError("no pair within the correspondence gate")

    src_idx = np.nonzero(mask)[0]
    tgt_idx = nn[mask]
    errors = target.points[tgt_idx] - transformed[mask]
    joint = source.covariances[src_idx] + target.covariances[tgt_idx]
    joint = joint + _JOINT_COV_EPS * np.eye(3)
    joint_inv = np.linalg.inv(joint)
    d2 = np.einsum("ni,nij,nj->n", errors, joint_inv, errors)
    weights = np.exp(-d2 / (2.0 * sigma * sigma))
    return Correspondences(
        source_indices=src_idx,
        target_indices=tgt_idx,
        source_points=source.points[src_idx],
        target_points=target.points[tgt_idx],
        errors=errors,
        joint_covs=joint,
        weights=weights,
        joint_cov_invs=joint_inv,
    )


def weighted_cost(corrs: Correspondences, T: Pose) -> float:
    """Sum of w * d^2 over the pair set, errors re-evaluated at T with the
    stored weights and joint covariances frozen."""
    errors = corrs.target_points - se3.transform_points(T, corrs.source_points)
    d2 = np.einsum("ni,nij,nj->n", errors, corrs.joint_cov_invs, errors)
    return float(np.sum(corrs.weights * d2))


def accumulate_normal_equations(corrs: Correspondences, T: Pose) -> NormalEquations:
    """Weighted system over the pair set at pose T.

    The error Jacobian w.r.t. a left-multiplied twist is J = [S(p'), -I];
    because the error is target minus source, the gradient is accumulated
    with its sign flipped so that solve_damped yields a descent step.
    """
    if len(corrs) == 0:
        raise NoCorrespondencesError("cannot accumulate an empty correspondence set")
    transformed = se3.transform_points(T, corrs.source_points)
    errors = corrs.target_points - transformed

    n = len(corrs)
    J = np.zeros((n, 3, 6))
    x, y, z = transformed[:, 0], transformed[:, 1], transformed[:, 2]
    J[:, 0, 1] = -z
    J[:, 0, 2] = y
    J[:, 1, 0] = z
    J[:, 1, 2] = -x
    J[:, 2, 0] = -y
    J[:, 2, 1] = x
    J[:, 0, 3] = -1.0
    J[:, 1, 4] = -1.0
    J[:, 2, 5] = -1.0

    minv_J = corrs.joint_cov_invs @ J
    wJ = (corrs.weights[:, None, None] * J).reshape(-1, 6)
    H = wJ.T @ minv_J.reshape(-1, 6)
    minv_e = np.einsum("nij,nj->ni", corrs.joint_cov_invs, errors)
    b = -wJ.T @ minv_e.reshape(-1)
    H = 0.5 * (H + H.T)
    return NormalEquations(H, b)


def coarse_register(
    source: PointCloud,
    target: PointCloud,
    target_index: NeighborIndex,
    T0: Pose,
    cfg,
) -> CoarseResult:
    """Iterate correspondence search and damped solves from T0.

    The source must already be density-filtered and covariance-populated;
    the target must carry covariances and come with its index. A step that
    raises the frozen-set cost multiplies the damping by 10 and retries, up
    to five times, after which the loop exits.
    """
    T = T0
    iterations = 0
    converged = False
    cost = 0.0
    count = 0
    for _ in range(cfg.coarse_max_iters):
        corrs = find_correspondences(source, target, target_index, T, cfg.coarse_sigma, cfg.coarse_max_dist)
        count = len(corrs)
        iterations += 1
        ne = accumulate_normal_equations(corrs, T)
        cost = weighted_cost(corrs, T)

        lam = cfg.lm_lambda
        accepted = None
        for _ in range(_COST_RETRIES + 1):
            try:
                dx = se3.solve_damped(ne, lam)
            except SingularSystemError:
                lam *= 10.0
                continue
            T_trial = se3.compose(se3.exp_map(dx), T)
            trial_cost = weighted_cost(corrs, T_trial)
            if trial_cost <= cost:
                accepted = (T_trial, dx, trial_cost)
                break
            lam *= 10.0
        if accepted is None:
            break
        T, dx, cost = accepted

        if np.linalg.norm(T.translation - T0.translation) > cfg.max_translation:
            raise DivergedTransformError(
                f"translation moved more than {cfg.max_translation} m from the initial pose"
            )
        if dx.norm() < cfg.coarse_tol:
            converged = True
            break
    return CoarseResult(T, iterations, converged, cost, count)
