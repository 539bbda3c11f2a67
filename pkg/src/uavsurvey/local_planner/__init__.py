from .dodge import (
    AvoidanceConfig,
    DodgePoint,
    DodgeResult,
    buffer_radius,
    dynamic_dodge,
    static_dodge,
    tangent_points,
    tangent_slopes,
)
from .dubins import DubinsWord, PathNode, Trajectory, dubins_2d, dubins_3d
from .smoothing import simplify_path, smooth_path, smooth_segment

__all__ = [
    "AvoidanceConfig",
    "DodgePoint",
    "DodgeResult",
    "DubinsWord",
    "PathNode",
    "Trajectory",
    "buffer_radius",
    "dubins_2d",
    "dubins_3d",
    "dynamic_dodge",
    "simplify_path",
    "smooth_path",
    "smooth_segment",
    "static_dodge",
    "tangent_points",
    "tangent_slopes",
]
