"""Absolute pose error over a trajectory, with optional rigid alignment.

Errors are translational distances per frame; the summary uses population
statistics so rmse^2 = mean^2 + std^2 holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import se3
from .errors import DegenerateGeometryError, LengthMismatchError
from .se3 import Pose

_COLLINEAR_REL_TOL = 1e-12


@dataclass(frozen=True)
class ApeReport:
    rmse: float
    mean: float
    std: float
    per_frame: np.ndarray
    aligned: bool


def _translations(poses: List[Pose]) -> np.ndarray:
    return np.array([p.translation for p in poses]).reshape(-1, 3)


def align_umeyama_se3(estimate: List[Pose], reference: List[Pose]) -> Pose:
    """Rigid transform (no scale) minimizing the squared distance between
    the estimate translations mapped onto the reference translations."""
    if len(estimate) != len(reference):
        raise LengthMismatchError(f"{len(estimate)} vs {len(reference)} poses")
    if len(estimate) < 3:
        raise DegenerateGeometryError("alignment needs at least 3 poses")
    x = _translations(estimate)
    y = _translations(reference)
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    cross = (y - mu_y).T @ (x - mu_x) / len(x)
    U, S, Vt = np.linalg.svd(cross)
    if S[1] <= _COLLINEAR_REL_TOL * max(S[0], 1.0):
        raise DegenerateGeometryError("estimate translations are collinear or coincident")
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    return Pose(R, mu_y - R @ mu_x)


def compute_ape(estimate: List[Pose], reference: List[Pose], align: bool = True) -> ApeReport:
    """Per-frame translational APE and its population summary statistics."""
    if len(estimate) != len(reference):
        raise LengthMismatchError(f"{len(estimate)} vs {len(reference)} poses")
    if len(estimate) == 0:
        raise LengthMismatchError("empty trajectories")
    A = align_umeyama_se3(estimate, reference) if align else Pose.identity()
    est = se3.transform_points(A, _translations(estimate))
    ref = _translations(reference)
    errors = np.linalg.norm(ref - est, axis=1)
    mean = float(np.mean(errors))
    std = float(np.std(errors))
    # quadrature form keeps rmse^2 = mean^2 + std^2 exact and std precise at 0
    rmse = float(np.hypot(mean, std))
    return ApeReport(rmse=rmse, mean=mean, std=std, per_frame=errors, aligned=align)


def write_ape_csv(report: ApeReport, path) -> None:
    """Per-frame rows under `frame,ape_m`, then a `rmse,mean,std` footer."""
    lines = ["frame,ape_m"]
    lines += [f"{i},{e:.9g}" for i, e in enumerate(report.per_frame)]
    lines.append("rmse,mean,std")
    lines.append(f"{report.rmse:.9g},{report.mean:.9g},{report.std:.9g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
