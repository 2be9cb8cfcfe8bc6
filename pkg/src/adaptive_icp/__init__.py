"""LiDAR odometry engine.

Pipeline per scan: voxel downsampling, density filtering, covariance and
normal estimation, covariance-weighted coarse registration against the
local map, a reliability gate between the coarse result and a motion
prediction, and adaptive point-to-plane refinement, with the residual
threshold adapting to the recent motion-weighted error history.
"""

from .adaptive_threshold import MotionWindow, dynamic_weight, model_deviation_error
from .cloud import (
    NeighborIndex,
    PointCloud,
    build_index,
    compute_covariances,
    compute_densities,
    compute_normals,
    density_filter,
    voxel_downsample,
)
from .coarse_reg import CoarseResult, Correspondences, coarse_register, find_correspondences
from .config import EngineConfig, dump_config, load_config, parse_config
from .evaluation import ApeReport, align_umeyama_se3, compute_ape
from .fine_reg import FineResult, PlanarResiduals, adaptive_weight, build_planar_residuals, fine_register
from .local_map import LocalMap, MapSnapshot
from .pipeline import FrameDiagnostics, OdometryState, SequenceSummary, process_frame, run_sequence
from .pose_gate import PoseHistory, predict_pose, select_initial_pose, translation_difference
from .se3 import (
    NormalEquations,
    Pose,
    Twist,
    apply,
    compose,
    exp_map,
    inverse,
    log_map,
    rotation_angle,
    skew,
    solve_damped,
    transform_points,
)

__version__ = "0.1.0"
