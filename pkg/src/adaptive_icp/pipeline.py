"""Per-frame odometry orchestration.

Each scan is downsampled, density-filtered, and equipped with covariances
and normals; coarse registration against the local map competes with the
motion prediction at the gate; fine registration refines the winner; the
threshold window, pose history, and map advance afterwards. The first
frame seeds the map at the identity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import Callable, Iterable, Optional

import numpy as np

from .adaptive_threshold import MotionWindow, dynamic_weight, model_deviation_error
from .cloud import PointCloud, compute_covariances, compute_normals, density_filter, voxel_downsample
from .coarse_reg import coarse_register
from .config import EngineConfig
from .errors import DivergedTransformError, NoCorrespondencesError, OdometryError
from .fine_reg import fine_register
from .local_map import LocalMap
from .pose_gate import PoseHistory, predict_pose, select_initial_pose, translation_difference
from .se3 import Pose

_SENSOR_ORIGIN = np.zeros(3)

BRANCH_SEED = "seed"


@dataclass
class FrameDiagnostics:
    frame_index: int
    branch: str
    translation_difference: float
    sigma_th: float
    coarse_iterations: int
    fine_iterations: int
    coarse_failed: bool
    fine_failed: bool
    points_raw: int
    points_used: int
    downsample_ms: float = 0.0
    filter_ms: float = 0.0
    features_ms: float = 0.0
    snapshot_ms: float = 0.0
    coarse_ms: float = 0.0
    fine_ms: float = 0.0
    map_ms: float = 0.0
    total_ms: float = 0.0


@dataclass
class SequenceSummary:
    """frame count, per-frame wall-time statistics, and the number of frames
    whose fine registration fell back to the initial pose."""

    frame_count: int
    mean_ms: float
    max_ms: float
    failure_count: int


class OdometryState:
    """Mutable per-sequence state owned by the pipeline thread."""

    def __init__(self, cfg: EngineConfig):
        self.history = PoseHistory()
        self.window = MotionWindow(cfg.threshold_window, cfg.dt)
        self.map = LocalMap(cfg.map_voxel, cfg.map_cap, cfg.map_range)
        self.frame_counter = 0


class _Stopwatch:
    def __init__(self):
        self._last = time.perf_counter()
        self.start = self._last

    def lap(self) -> float:
        now = time.perf_counter()
        ms = (now - self._last) * 1000.0
        self._last = now
        return ms

    def total(self) -> float:
        return (time.perf_counter() - self.start) * 1000.0


def _preprocess(scan: PointCloud, cfg: EngineConfig, filter_density: bool, watch: _Stopwatch):
    down = voxel_downsample(scan, cfg.frame_voxel)
    downsample_ms = watch.lap()
    if filter_density:
        down = density_filter(down, cfg.density_radius, cfg.density_alpha)
    filter_ms = watch.lap()
    down = compute_covariances(down, cfg.knn)
    down = compute_normals(down, cfg.knn, _SENSOR_ORIGIN)
    features_ms = watch.lap()
    return down, downsample_ms, filter_ms, features_ms


def process_frame(state: OdometryState, scan: PointCloud, cfg: EngineConfig):
    """Advance the odometry by one scan; returns (world pose, diagnostics).

    Coarse failures route to the motion prediction at the gate; fine
    failures fall back to the initial pose with a flag. Genuinely
    unprocessable scans (empty, too few points) raise.
    """
    watch = _Stopwatch()
    index = state.frame_counter

    if index == 0:
        processed, downsample_ms, filter_ms, features_ms = _preprocess(scan, cfg, False, watch)
        pose = Pose.identity()
        state.map.insert_frame(processed, pose)
        map_ms = watch.lap()
        state.history.append(pose)
        state.frame_counter += 1
        diag = FrameDiagnostics(
            frame_index=index,
            branch=BRANCH_SEED,
            translation_difference=float("nan"),
            sigma_th=float("nan"),
            coarse_iterations=0,
            fine_iterations=0,
            coarse_failed=False,
            fine_failed=False,
            points_raw=len(scan),
            points_used=len(processed),
            downsample_ms=downsample_ms,
            filter_ms=filter_ms,
            features_ms=features_ms,
            map_ms=map_ms,
            total_ms=watch.total(),
        )
        return pose, diag

    processed, downsample_ms, filter_ms, features_ms = _preprocess(scan, cfg, True, watch)
    sigma_th = state.window.current_threshold(cfg.sigma_floor, cfg.bootstrap_sigma)
    T_pred = predict_pose(state.history, sigma_th, cfg.pred_weight_old, cfg.pred_weight_recent)
    snapshot = state.map.snapshot()
    snapshot_ms = watch.lap()

    align = None
    coarse_iters = 0
    coarse_failed = False
    try:
        coarse = coarse_register(processed, snapshot.cloud, snapshot.index, T_pred, cfg)
        align = coarse.transform
        coarse_iters = coarse.iterations
    except (NoCorrespondencesError, DivergedTransformError):
        coarse_failed = True
    coarse_ms = watch.lap()

    delta_t = translation_difference(T_pred, align) if align is not None else float("nan")
    T_init, branch = select_initial_pose(T_pred, align, cfg.gate_tau)

    fine_failed = False
    fine_iters = 0
    try:
        fine = fine_register(processed, snapshot, T_init, sigma_th, cfg)
        T_new = fine.transform
        fine_iters = fine.iterations
    except (NoCorrespondencesError, DivergedTransformError):
        T_new = T_init
        fine_failed = True
    fine_ms = watch.lap()

    accel_change = state.window.update_kinematics(state.history.latest(), T_new)
    gamma = dynamic_weight(accel_change, cfg.dt, cfg.sigma_decay)
    error = model_deviation_error(T_init, T_new, cfg.sigma_max, cfg.beta)
    state.window.push(gamma, error)

    state.history.append(T_new)
    state.frame_counter += 1
    state.map.insert_frame(processed, T_new)
    state.map.prune(T_new.translation)
    map_ms = watch.lap()

    diag = FrameDiagnostics(
        frame_index=index,
        branch=branch,
        translation_difference=delta_t,
        sigma_th=sigma_th,
        coarse_iterations=coarse_iters,
        fine_iterations=fine_iters,
        coarse_failed=coarse_failed,
        fine_failed=fine_failed,
        points_raw=len(scan),
        points_used=len(processed),
        downsample_ms=downsample_ms,
        filter_ms=filter_ms,
        features_ms=features_ms,
        snapshot_ms=snapshot_ms,
        coarse_ms=coarse_ms,
        fine_ms=fine_ms,
        map_ms=map_ms,
        total_ms=watch.total(),
    )
    return T_new, diag


def run_sequence(
    frames: Iterable[PointCloud],
    cfg: EngineConfig,
    on_pose: Optional[Callable[[Pose], None]] = None,
    on_diagnostics: Optional[Callable[[FrameDiagnostics], None]] = None,
) -> SequenceSummary:
    """Stream every frame through process_frame in input order.

    Pose output is deterministic and independent of the measured timings.
    Reader or frame errors are re-raised with the frame index attached.
    """
    state = OdometryState(cfg)
    times = []
    failures = 0
    index = 0
    iterator = iter(frames)
    while True:
        try:
            scan = next(iterator)
        except StopIteration:
            break
        except OSError as exc:
            raise OdometryError(f"frame {index}: read failed: {exc}") from exc
        try:
            pose, diag = process_frame(state, scan, cfg)
        except OdometryError as exc:
            raise OdometryError(f"frame {index}: {exc}") from exc
        times.append(diag.total_ms)
        failures += int(diag.fine_failed)
        if on_pose is not None:
            on_pose(pose)
        if on_diagnostics is not None:
            on_diagnostics(diag)
        index += 1
    if index == 0:
        raise OdometryError("frame source yielded no frames")
    return SequenceSummary(
        frame_count=index,
        mean_ms=float(np.mean(times)),
        max_ms=float(np.max(times)),
        failure_count=failures,
    )


def diagnostics_header() -> str:
    return ",".join(f.name for f in fields(FrameDiagnostics))


def diagnostics_row(diag: FrameDiagnostics) -> str:
    parts = []
    for f in fields(FrameDiagnostics):
        v = getattr(diag, f.name)
        if isinstance(v, bool):
            parts.append("1" if v else "0")
        elif isinstance(v, float):
            parts.append(f"{v:.6g}")
        else:
            parts.append(str(v))
    return ",".join(parts)
