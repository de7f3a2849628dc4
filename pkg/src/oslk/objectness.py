"""Geometry-only objectness scoring for class-agnostic 3D proposals.

A proposal is scored purely by how well its geometry agrees with a target
box: a center term and a scale term, each pushed through a Gaussian kernel,
combined by geometric mean. No class information enters anywhere, so the
scores transfer to unseen categories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .geometry import Box3D, iou3d, scale_matrix
from .matching import MatchResult


@dataclass(frozen=True)
class ScoringConfig:
    """Kernel bandwidths for the center and scale terms."""

    tau_center: float = 0.5
    tau_scale: float = 0.05

    def __post_init__(self) -> None:
        if not (math.isfinite(self.tau_center) and self.tau_center > 0.0):
            raise InvalidInputError(f"tau_center must be positive, got {self.tau_center!r}")
        if not (math.isfinite(self.tau_scale) and self.tau_scale > 0.0):
            raise InvalidInputError(f"tau_scale must be positive, got {self.tau_scale!r}")


@dataclass(frozen=True)
class ObjectnessScore:
    """Center score, scale score, and their geometric mean, all in [0, 1]."""

    s_center: float
    s_scale: float
    s_obj: float

    def __post_init__(self) -> None:
        for name in ("s_center", "s_scale", "s_obj"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value!r}")


def gaussian_kernel(d: float, tau: float) -> float:
    """exp(-d^2 / (2 tau)) for a non-negative distance d and bandwidth tau > 0."""
    if not (math.isfinite(tau) and tau > 0.0):
        raise InvalidInputError(f"tau must be positive and finite, got {tau!r}")
    if not (math.isfinite(d) and d >= 0.0):
        raise InvalidInputError(f"distance must be non-negative and finite, got {d!r}")
    return math.exp(-(d * d) / (2.0 * tau))


def center_distance(gt: Box3D, pred: Box3D) -> float:
    """L1 distance between box centers."""
    return abs(gt.x - pred.x) + abs(gt.y - pred.y) + abs(gt.z - pred.z)


def scale_distance(gt: Box3D, pred: Box3D) -> float:
    """Entrywise L1 distance between the two 3x3 scale matrices."""
    return float(np.abs(scale_matrix(gt) - scale_matrix(pred)).sum())


def centerness_score(gt: Box3D, pred: Box3D, config: ScoringConfig | None = None) -> float:
    cfg = config or ScoringConfig()
    return gaussian_kernel(center_distance(gt, pred), cfg.tau_center)


def scale_score(gt: Box3D, pred: Box3D, config: ScoringConfig | None = None) -> float:
    cfg = config or ScoringConfig()
    return gaussian_kernel(scale_distance(gt, pred), cfg.tau_scale)


def objectness_score(
    gt: Box3D, pred: Box3D, config: ScoringConfig | None = None
) -> ObjectnessScore:
    """Geometric mean of the center and scale kernels.

    Equals 1 exactly when the boxes coincide and decays with either kind
    of geometric disagreement.
    """
    cfg = config or ScoringConfig()
    s_center = centerness_score(gt, pred, cfg)
    s_scale = scale_score(gt, pred, cfg)
    return ObjectnessScore(
        s_center=s_center,
        s_scale=s_scale,
        s_obj=math.sqrt(s_center * s_scale),
    )


def objectness_loss(
    targets: Sequence[float],
    preds: Sequence[float],
    assignment: MatchResult,
    reduction: str = "sum",
) -> float:
    """L1 loss between target scores and their assigned predicted scores.

    Sum-reduced by default; reduction="mean" divides by the number of
    matched pairs.
    """
    if reduction not in ("sum", "mean"):
        raise InvalidInputError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    if not assignment.assignment:
        raise InvalidInputError("assignment must contain at least one pair")
    total = 0.0
    for row in sorted(assignment.assignment):
        col = assignment.assignment[row]
        if not 0 <= row < len(targets):
            raise InvalidInputError(f"assignment row {row} out of range for targets")
        if not 0 <= col < len(preds):
            raise InvalidInputError(f"assignment column {col} out of range for preds")
        total += abs(float(targets[row]) - float(preds[col]))
    if reduction == "mean":
        return total / len(assignment.assignment)
    return total


def oln_style_score(gt: Box3D, pred: Box3D, config: ScoringConfig | None = None) -> float:
    """Baseline localization-quality score: sqrt(centerness * volume IoU)."""
    return math.sqrt(centerness_score(gt, pred, config) * iou3d(gt, pred))
