import numpy as np
import pytest

from adaptive_icp import Pose, align_umeyama_se3, compute_ape, se3
from adaptive_icp.errors import DegenerateGeometryError, LengthMismatchError
from adaptive_icp.evaluation import write_ape_csv

from scenes import random_pose


def trajectory(rng, n=40, scale=20.0):
    return [random_pose(rng, 1.0, scale) for _ in range(n)]


def moved_by(poses, Q):
    return [se3.compose(Q, p) for p in poses]


def test_align_identity_on_equal_trajectories():
    rng = np.random.default_rng(110)
    poses = trajectory(rng)
    A = align_umeyama_se3(poses, poses)
    assert np.allclose(A.matrix(), np.eye(4), atol=1e-9)


def test_align_recovers_rigid_motion():
    rng = np.random.default_rng(111)
    reference = trajectory(rng)
    Q = random_pose(rng, 1.2, 7.0)
    estimate = moved_by(reference, Q)
    A = align_umeyama_se3(estimate, reference)
    assert np.allclose(A.matrix(), se3.inverse(Q).matrix(), atol=1e-9)


def test_align_never_hurts_rmse():
    rng = np.random.default_rng(112)
    for _ in range(100):
        reference = trajectory(rng, n=15)
        estimate = [
            Pose(p.rotation, p.translation + rng.normal(scale=0.3, size=3)) for p in reference
        ]
        raw = compute_ape(estimate, reference, align=False)
        aligned = compute_ape(estimate, reference, align=True)
        assert aligned.rmse <= raw.rmse + 1e-12


def test_align_rejects_degenerate_geometry():
    line = [Pose(np.eye(3), [float(i), 0.0, 0.0]) for i in range(10)]
    with pytest.raises(DegenerateGeometryError):
        align_umeyama_se3(line, line)
    with pytest.raises(DegenerateGeometryError):
        align_umeyama_se3(line[:2], line[:2])


def test_ape_identical_trajectories_zero():
    rng = np.random.default_rng(113)
    poses = trajectory(rng)
    report = compute_ape(poses, poses, align=False)
    assert report.rmse == report.mean == report.std == 0.0


def test_ape_uniform_offset():
    rng = np.random.default_rng(114)
    reference = trajectory(rng)
    estimate = [Pose(p.rotation, p.translation + np.array([1.0, 0, 0])) for p in reference]
    report = compute_ape(estimate, reference, align=False)
    assert np.isclose(report.rmse, 1.0, atol=1e-12)
    assert np.isclose(report.mean, 1.0, atol=1e-12)
    assert np.isclose(report.std, 0.0, atol=1e-9)


def test_ape_scalar_statistics_example():
    # per-frame errors {3, 4}: mean 3.5, rmse sqrt(12.5), std 0.5
    reference = [Pose(np.eye(3), [0.0, 0, 0]), Pose(np.eye(3), [10.0, 0, 0])]
    estimate = [Pose(np.eye(3), [3.0, 0, 0]), Pose(np.eye(3), [14.0, 0, 0])]
    report = compute_ape(estimate, reference, align=False)
    assert np.isclose(report.mean, 3.5)
    assert np.isclose(report.rmse, np.sqrt(12.5))
    assert np.isclose(report.std, 0.5)


def test_population_identity_holds():
    rng = np.random.default_rng(115)
    for _ in range(50):
        reference = trajectory(rng, n=12)
        estimate = [
            Pose(p.rotation, p.translation + rng.normal(scale=0.5, size=3)) for p in reference
        ]
        for align in (False, True):
            r = compute_ape(estimate, reference, align=align)
            assert np.isclose(r.rmse**2, r.mean**2 + r.std**2, atol=1e-9)
            assert r.rmse >= r.mean >= 0.0


def test_aligned_ape_invariant_to_rigid_motion_of_estimate():
    rng = np.random.default_rng(116)
    reference = trajectory(rng)
    estimate = [
        Pose(p.rotation, p.translation + rng.normal(scale=0.2, size=3)) for p in reference
    ]
    base = compute_ape(estimate, reference, align=True)
    for _ in range(5):
        Q = random_pose(rng, 1.5, 30.0)
        moved = compute_ape(moved_by(estimate, Q), reference, align=True)
        assert abs(moved.rmse - base.rmse) < 1e-6
        assert np.allclose(moved.per_frame, base.per_frame, atol=1e-6)


def test_ape_rejects_length_mismatch():
    rng = np.random.default_rng(117)
    poses = trajectory(rng, n=5)
    with pytest.raises(LengthMismatchError):
        compute_ape(poses, poses[:4], align=False)


def test_ape_csv_format(tmp_path):
    rng = np.random.default_rng(118)
    reference = trajectory(rng, n=4)
    report = compute_ape(reference, reference, align=False)
    path = tmp_path / "report.csv"
    write_ape_csv(report, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "frame,ape_m"
    assert len(lines) == 1 + 4 + 2
    assert lines[-2] == "rmse,mean,std"
    assert lines[1].startswith("0,")
