"""Direct depth and pose refinement with patch photometric and superpixel planar losses."""

from .bundle import DepthGrid, FrameBundle, make_bundle
from .geometry import Intrinsics, Pose, pose_compose, pose_inverse, se3_exp, se3_log
from .gradcheck import GradcheckReport, gradcheck
from .keypoints import KeypointSet, gradient_map, select_keypoints
from .losses import LossBreakdown, LossConfig, evaluate, photometric_loss, smoothness_loss
from .metrics import depth_metrics, normal_metrics, normals_from_depth, pose_metrics
from .planes import fit_plane, planar_depth, spp_loss
from .solver import SolverConfig, prepare_bundle, refine
from .superpixels import felzenszwalb_segment, large_regions
from .synth import default_scene, make_scene

__all__ = [
    "DepthGrid", "FrameBundle", "make_bundle",
    "Intrinsics", "Pose", "pose_compose", "pose_inverse", "se3_exp", "se3_log",
    "GradcheckReport", "gradcheck",
    "KeypointSet", "gradient_map", "select_keypoints",
    "LossBreakdown", "LossConfig", "evaluate", "photometric_loss", "smoothness_loss",
    "depth_metrics", "normal_metrics", "normals_from_depth", "pose_metrics",
    "fit_plane", "planar_depth", "spp_loss",
    "SolverConfig", "prepare_bundle", "refine",
    "felzenszwalb_segment", "large_regions",
    "default_scene", "make_scene",
]
