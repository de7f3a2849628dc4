"""Open-set pseudo-label toolkit for 3D detection.

Pipelines for turning class-agnostic box proposals into unknown-object
pseudo labels: geometric assignment, objectness scoring, feature-grid
response, joint selection, evaluation, and a deterministic scene
simulator. Hot geometry/assignment kernels run through a compiled
extension when available and fall back to pure Python otherwise.
"""
from __future__ import annotations

from ._kernels import backend as kernel_backend
from .bevgrid import BevGrid, ResponseMap, read_bevg, reduce_grid, window_response, write_bevg
from .config import EvalConfig, RunConfig, load_run_config
from .errors import (
    ConfigError,
    InfeasibleError,
    InternalCheckError,
    InvalidInputError,
    OslkError,
)
from .evalkit import (
    Detection,
    EvalReport,
    average_precision,
    evaluate_distance_protocol,
    evaluate_iou_protocol,
    ko_proportion_analysis,
)
from .geometry import Box3D, bev_iou, iou3d, normalize_yaw
from .matching import MatchResult, geo_hungarian_match, hungarian_match, solve_assignment
from .objectness import ObjectnessScore, ScoringConfig, gaussian_kernel, objectness_score
from .scene import Scene, load_scenes, save_scenes
from .selection import (
    PipelineConfig,
    Proposal,
    PseudoLabel,
    PseudoLabelSet,
    joint_select,
    run_scene_pipeline,
)
from .simulator import SimConfig, generate_benchmark, generate_scene

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "kernel_backend",
    "BevGrid",
    "ResponseMap",
    "read_bevg",
    "reduce_grid",
    "window_response",
    "write_bevg",
    "EvalConfig",
    "RunConfig",
    "load_run_config",
    "ConfigError",
    "InfeasibleError",
    "InternalCheckError",
    "InvalidInputError",
    "OslkError",
    "Detection",
    "EvalReport",
    "average_precision",
    "evaluate_distance_protocol",
    "evaluate_iou_protocol",
    "ko_proportion_analysis",
    "Box3D",
    "bev_iou",
    "iou3d",
    "normalize_yaw",
    "MatchResult",
    "geo_hungarian_match",
    "hungarian_match",
    "solve_assignment",
    "ObjectnessScore",
    "ScoringConfig",
    "gaussian_kernel",
    "objectness_score",
    "Scene",
    "load_scenes",
    "save_scenes",
    "PipelineConfig",
    "Proposal",
    "PseudoLabel",
    "PseudoLabelSet",
    "joint_select",
    "run_scene_pipeline",
    "SimConfig",
    "generate_benchmark",
    "generate_scene",
]
