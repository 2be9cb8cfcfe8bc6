"""KITTI-format ingestion and trajectory serialization.

Scans are packed little-endian float32 quadruples (x, y, z, reflectance);
poses are 12 row-major reals encoding a 3x4 [R|t]. Estimates live in the
sensor frame; camera-frame ground truth is conjugated into the sensor frame
through the calibration extrinsic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from . import se3
from .cloud import PointCloud
from .errors import (
    MalformedPoseLineError,
    MalformedScanError,
    UnsupportedFormatError,
)
from .se3 import Pose

log = logging.getLogger(__name__)

_BYTES_PER_POINT = 16
# File precision: rotations re-orthonormalized beyond this residual.
_FILE_ORTHO_TOL = 1e-6

FORMAT_KITTI = "kitti"
FORMAT_TUM = "tum"


@dataclass
class KittiSequence:
    """One odometry sequence: scan file list plus optional ground truth and
    sensor-to-camera extrinsic."""

    scan_paths: List[Path]
    ground_truth: Optional[List[Pose]] = None
    calib_tr: Optional[Pose] = None

    def __len__(self) -> int:
        return len(self.scan_paths)


def read_scan(path) -> PointCloud:
    """Read one packed binary scan; non-finite points are dropped."""
    size = Path(path).stat().st_size
    if size % _BYTES_PER_POINT != 0:
        raise MalformedScanError(f"{path}: size {size} bytes is not a multiple of {_BYTES_PER_POINT}")
    raw = np.fromfile(path, dtype="<f4")
    xyz = raw.reshape(-1, 4)[:, :3].astype(np.float64)
    finite = np.all(np.isfinite(xyz), axis=1)
    dropped = int(np.count_nonzero(~finite))
    if dropped:
        log.warning("%s: dropped %d non-finite points", path, dropped)
    return PointCloud(xyz[finite])


def write_scan(cloud: PointCloud, path) -> None:
    """Write points in the packed scan layout with zero reflectance."""
    data = np.zeros((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.points.astype("<f4")
    data.tofile(path)


def _pose_from_fields(values: np.ndarray) -> Pose:
    mat = values.reshape(3, 4)
    R = mat[:, :3]
    if np.linalg.norm(R.T @ R - np.eye(3)) > _FILE_ORTHO_TOL:
        R = se3.orthonormalize(R)
    return Pose(R, mat[:, 3])


def _parse_pose_line(line: str, lineno: int) -> Pose:
    tokens = line.split()
    if len(tokens) != 12:
        raise MalformedPoseLineError(lineno, f"expected 12 fields, got {len(tokens)}")
    try:
        values = np.array([float(t) for t in tokens])
    except ValueError:
        raise MalformedPoseLineError(lineno, "non-numeric field") from None
    if not np.all(np.isfinite(values)):
        raise MalformedPoseLineError(lineno, "non-finite field")
    return _pose_from_fields(values)


def read_poses(path) -> List[Pose]:
    poses = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            poses.append(_parse_pose_line(line, lineno))
    return poses


def read_calibration(path) -> Pose:
    """Extrinsic from the `Tr:` line of a calib file."""
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.startswith("Tr:") or line.startswith("Tr "):
                return _parse_pose_line(line.split(":", 1)[-1], lineno)
    raise MalformedPoseLineError(0, f"{path}: no Tr line found")


def apply_calibration(poses_cam: List[Pose], tr: Pose) -> List[Pose]:
    """Conjugate a camera-frame trajectory into the sensor frame:
    T_sensor = Tr^-1 * T_cam * Tr."""
    tr_inv = se3.inverse(tr)
    return [se3.compose(tr_inv, se3.compose(T, tr)) for T in poses_cam]


def _format_floats(values) -> str:
    return " ".join(f"{v:.9g}" for v in values)


def write_trajectory(poses: List[Pose], path, format: str = FORMAT_KITTI, dt: float = 0.1) -> None:
    if format == FORMAT_KITTI:
        lines = [_format_floats(np.hstack([p.rotation, p.translation[:, None]]).ravel()) for p in poses]
    elif format == FORMAT_TUM:
        lines = []
        for i, p in enumerate(poses):
            q = Rotation.from_matrix(p.rotation).as_quat()  # (qx, qy, qz, qw)
            lines.append(f"{i * dt:.6f} " + _format_floats(np.concatenate([p.translation, q])))
    else:
        raise UnsupportedFormatError(f"unknown trajectory format {format!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path, format: str = FORMAT_KITTI) -> List[Pose]:
    if format == FORMAT_KITTI:
        return read_poses(path)
    if format != FORMAT_TUM:
        raise UnsupportedFormatError(f"unknown trajectory format {format!r}")
    poses = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 8:
                raise MalformedPoseLineError(lineno, f"expected 8 fields, got {len(tokens)}")
            try:
                values = np.array([float(t) for t in tokens])
            except ValueError:
                raise MalformedPoseLineError(lineno, "non-numeric field") from None
            if not np.all(np.isfinite(values)):
                raise MalformedPoseLineError(lineno, "non-finite field")
            R = Rotation.from_quat(values[4:8]).as_matrix()
            poses.append(Pose(R, values[1:4]))
    return poses


def load_sequence(dataset_dir, sequence_id: str) -> KittiSequence:
    """Discover one sequence under the standard directory layout:
    sequences/<id>/velodyne/*.bin, poses/<id>.txt, sequences/<id>/calib.txt."""
    root = Path(dataset_dir)
    scan_dir = root / "sequences" / sequence_id / "velodyne"
    if not scan_dir.is_dir():
        raise FileNotFoundError(f"no scan directory at {scan_dir}")
    scan_paths = sorted(scan_dir.glob("*.bin"))
    if not scan_paths:
        raise FileNotFoundError(f"no .bin scans under {scan_dir}")

    pose_file = root / "poses" / f"{sequence_id}.txt"
    ground_truth = read_poses(pose_file) if pose_file.is_file() else None

    calib_file = root / "sequences" / sequence_id / "calib.txt"
    calib_tr = read_calibration(calib_file) if calib_file.is_file() else None
    return KittiSequence(scan_paths, ground_truth, calib_tr)


def iter_scans(sequence: KittiSequence):
    for path in sequence.scan_paths:
        yield read_scan(path)
