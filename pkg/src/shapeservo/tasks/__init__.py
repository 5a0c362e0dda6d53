"""Surgery-inspired task harnesses: retraction, tube connecting, tissue wrapping."""

from .goals import CurveGoal, PlaneGoal, WrapGoal, load_goal_file, save_goal_file
from .retraction import RetractionResult, retraction_goal, run_retraction
from .tube_connect import (
    TubeConnectResult,
    run_tube_connect,
    score_tube_connect,
    sweep_tube_cloud,
    tube_backbone,
    tube_connect_goals,
    tube_end_ring,
)
from .wrap import WrapResult, run_wrap, score_wrap, wrap_goal

__all__ = [
    "CurveGoal",
    "PlaneGoal",
    "RetractionResult",
    "TubeConnectResult",
    "WrapGoal",
    "WrapResult",
    "load_goal_file",
    "retraction_goal",
    "run_retraction",
    "run_tube_connect",
    "run_wrap",
    "save_goal_file",
    "score_tube_connect",
    "score_wrap",
    "sweep_tube_cloud",
    "tube_backbone",
    "tube_connect_goals",
    "tube_end_ring",
    "wrap_goal",
]
