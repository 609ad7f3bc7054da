"""Depth, disparity and camera motion recovery by direct view-synthesis optimization.

The package fits per-pixel depth, right-view disparity, relative camera poses
and explainability masks to a rectified stereo pair plus neighbouring frames,
minimizing photometric reconstruction losses with hand-written gradients.
"""

from .geometry import CameraModel, Pose6
from .losses import LossWeights
from .metrics import DepthMetrics, evaluate_depth, postprocess_flip_blend
from .optimizer import OptimizeConfig, Solution, optimize_joint, optimize_stereo
from .synthscene import SceneSpec, preset, render

__all__ = [
    "CameraModel",
    "DepthMetrics",
    "LossWeights",
    "OptimizeConfig",
    "Pose6",
    "SceneSpec",
    "Solution",
    "evaluate_depth",
    "optimize_joint",
    "optimize_stereo",
    "postprocess_flip_blend",
    "preset",
    "render",
]
