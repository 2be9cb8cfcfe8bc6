"""Adaptive threshold from motion-weighted registration-error history.

Each frame contributes a (dynamic weight, deviation error) entry to a
sliding window; the threshold is the weighted RMS of the stored errors,
so unstable motion (low weight) mutes its own error contribution.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

import numpy as np

from . import se3
from .errors import NonPositiveDtError
from .se3 import Pose


def dynamic_weight(accel_change: float, dt: float, decay: float) -> float:
    """exp(-alpha / (dt * decay)); 1 for steady motion, toward 0 for jerky."""
    if dt <= 0:
        raise NonPositiveDtError(f"dt must be positive, got {dt}")
    if decay <= 0:
        raise ValueError(f"decay must be positive, got {decay}")
    return float(np.exp(-accel_change / (dt * decay)))


def model_deviation_error(initial: Pose, refined: Pose, rotation_cap: float, rotation_scale: float) -> float:
    """Deviation between the initial and refined pose of one frame.

    The rotation term saturates at rotation_cap through tanh so that
    translation keeps dominating for large angles; the translation term is
    the plain norm of the relative translation.
    """
    deviation = se3.compose(se3.inverse(initial), refined)
    theta = se3.rotation_angle(deviation.rotation)
    return float(rotation_cap * np.tanh(rotation_scale * theta) + np.linalg.norm(deviation.translation))


class MotionWindow:
    """Bounded queue of (weight, error) entries plus kinematic state.

    window_size = 0 keeps every entry. The kinematic state tracks the
    previous frame-to-frame velocity and acceleration so the acceleration
    change rate can be formed by first differences.
    """

    def __init__(self, window_size: int, dt: float):
        if dt <= 0:
            raise NonPositiveDtError(f"dt must be positive, got {dt}")
        self.window_size = window_size
        self.dt = dt
        self.entries: deque = deque(maxlen=window_size if window_size > 0 else None)
        self.prev_velocity: Optional[np.ndarray] = None
        self.prev_accel: Optional[np.ndarray] = None

    def update_kinematics(self, T_prev: Pose, T_curr: Pose) -> float:
        """Advance velocity/acceleration state and return the acceleration
        change rate of this frame (zero while history is insufficient)."""
        velocity = se3.compose(se3.inverse(T_prev), T_curr).translation / self.dt
        if self.prev_velocity is None:
            accel = np.zeros(3)
        else:
            accel = (velocity - self.prev_velocity) / self.dt
        if self.prev_accel is None:
            change = 0.0
        else:
            change = float(np.linalg.norm(accel - self.prev_accel))
        self.prev_velocity = velocity
        self.prev_accel = accel
        return change

    def push(self, gamma: float, error: float) -> None:
        self.entries.append((float(gamma), float(error)))

    def current_threshold(self, floor: float, bootstrap: float) -> float:
        """Weighted RMS of the stored errors, floored; the bootstrap value is
        returned while the window is empty."""
        if not self.entries:
            return bootstrap
        gammas = np.array([g for g, _ in self.entries])
        errors = np.array([e for _, e in self.entries])
        rms = float(np.sqrt(np.sum(gammas * errors * errors) / len(self.entries)))
        return max(floor, rms)
