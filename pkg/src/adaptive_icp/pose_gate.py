"""Initial pose determination.

A motion prediction built from the pose history is compared against the
coarse-registration result; whichever survives the translation-difference
gate becomes the initial pose for fine registration.
"""

from __future__ import annotations

from collections import deque
from typing import Optional, Tuple

import numpy as np

from . import se3
from .errors import AngleNearPiError
from .se3 import Pose

PROVENANCE_ALIGN = "align"
PROVENANCE_PRED = "pred"


class PoseHistory:
    """Ordered world-frame poses, optionally ring-retained."""

    def __init__(self, capacity: Optional[int] = None):
        self._poses: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._poses)

    def append(self, pose: Pose) -> None:
        self._poses.append(pose)

    def latest(self) -> Pose:
        return self._poses[-1]

    def last_n(self, n: int):
        return list(self._poses)[-n:]


def predict_pose(history: PoseHistory, sigma_th: float, w_old: float = 1.0, w_recent_base: float = 1.0) -> Pose:
    """Predict the current world pose from recent history.

    With fewer than two poses there is nothing to extrapolate and the
    identity is returned. With exactly two, the last relative increment is
    replayed onto the newest pose. With three or more, the two most recent
    increments are blended in the Lie algebra, the newer one weighted by
    w_recent_base + sigma_th so that a large adaptive threshold leans the
    prediction toward the most recent motion.
    """
    n = len(history)
    if n < 2:
        return Pose.identity()
    if n == 2:
        prev, last = history.last_n(2)
        return se3.compose(last, se3.compose(se3.inverse(prev), last))
    a, b, c = history.last_n(3)
    try:
        older = se3.log_map(se3.compose(se3.inverse(a), b)).as_vector()
        recent = se3.log_map(se3.compose(se3.inverse(b), c)).as_vector()
    except AngleNearPiError:
        # a half-turn between consecutive frames has no usable blend axis;
        # replay the newest increment instead of failing the frame
        return se3.compose(c, se3.compose(se3.inverse(b), c))
    w_recent = w_recent_base + sigma_th
    blended = (w_old * older + w_recent * recent) / (w_old + w_recent)
    return se3.compose(c, se3.exp_map(se3.Twist.from_vector(blended)))


def translation_difference(pred: Pose, align: Pose) -> float:
    """Norm of the translation of pred^-1 * align."""
    return float(np.linalg.norm(se3.compose(se3.inverse(pred), align).translation))


def select_initial_pose(pred: Pose, align: Optional[Pose], tau: float) -> Tuple[Pose, str]:
    """Pick the initial pose and report which branch fired.

    `align` is None when coarse registration failed; that routes straight to
    the prediction. Otherwise the coarse result wins exactly when its
    translation difference from the prediction stays within tau.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if align is None:
        return pred, PROVENANCE_PRED
    if translation_difference(pred, align) <= tau:
        return align, PROVENANCE_ALIGN
    return pred, PROVENANCE_PRED
