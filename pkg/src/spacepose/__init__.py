"""Monocular spacecraft pose estimation from graph-augmented keypoint heatmaps
and PnP, trained on synthetic renders."""
from .geometry import CameraIntrinsics, Pose, project, pose_error_rotation, pose_error_translation
from .heatmap import Keypoints2D, decode, encode, rmse
from .kpgraph import KeypointGraph, build_adjacency, normalize_adjacency
from .pnpsolve import PnPOptions, PnPResult, solve

__version__ = "0.1.0"
