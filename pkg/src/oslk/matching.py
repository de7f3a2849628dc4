"""Geometric bipartite matching between ground-truth and predicted boxes.

The core matcher is class-blind: it ranks pairs purely by an L1 cost over
box geometry, so category labels never influence which prediction each
ground-truth box receives. A conventional class-plus-box cost is provided
alongside for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from . import _kernels
from .errors import InfeasibleError, InvalidInputError
from .geometry import TWO_PI, Box3D, boxes_to_array

# Implicit padding cost for the unmatched columns of rectangular problems.
# Constant padding never changes which real assignment is optimal; it only
# has to dominate any realistic geometric cost.
PAD_SENTINEL = 1e9

# Default weights for the class-plus-box cost.
DEFAULT_LAMBDA_CLS = 2.0
DEFAULT_LAMBDA_BOX = 0.25


@dataclass(frozen=True)
class MatchResult:
    """Outcome of an assignment solve.

    assignment maps each row (ground-truth index) to a distinct column
    (prediction index); per_pair_cost is ordered by row; total_cost is the
    row-ordered sum of per_pair_cost.
    """

    assignment: Dict[int, int]
    total_cost: float
    per_pair_cost: List[float]


def geo_cost(gt: Box3D, pred: Box3D, raw_yaw_l1: bool = False) -> float:
    """L1 distance over (x, y, z, w, l, h) plus a wrapped yaw difference.

    The yaw term is the geodesic angular distance in [0, pi], so nearly
    identical headings on opposite sides of the +-pi seam stay cheap.
    raw_yaw_l1 switches to a plain |r1 - r2| on the stored (normalized)
    yaws for comparison runs.
    """
    cost = (
        abs(gt.x - pred.x)
        + abs(gt.y - pred.y)
        + abs(gt.z - pred.z)
        + abs(gt.w - pred.w)
        + abs(gt.l - pred.l)
        + abs(gt.h - pred.h)
    )
    dr = abs(gt.r - pred.r)
    if not raw_yaw_l1:
        dr = min(dr, TWO_PI - dr)
    return cost + dr


def geo_cost_matrix(
    gts: Sequence[Box3D], preds: Sequence[Box3D], raw_yaw_l1: bool = False
) -> np.ndarray:
    """Pairwise geo_cost as an (len(gts), len(preds)) array."""
    a = boxes_to_array(gts)
    b = boxes_to_array(preds)
    diff = np.abs(a[:, None, :6] - b[None, :, :6]).sum(axis=-1)
    dr = np.abs(a[:, None, 6] - b[None, :, 6])
    if not raw_yaw_l1:
        dr = np.minimum(dr, TWO_PI - dr)
    return diff + dr


def hungarian_cost(
    gt: Box3D,
    pred: Box3D,
    pred_class_probs: Sequence[float],
    lambda_cls: float = DEFAULT_LAMBDA_CLS,
    lambda_box: float = DEFAULT_LAMBDA_BOX,
) -> float:
    """Conventional class-plus-box cost: lambda_cls*(1 - p[class]) + lambda_box*L1."""
    if gt.class_id is None:
        raise InvalidInputError("hungarian_cost requires gt.class_id to be set")
    probs = np.asarray(pred_class_probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidInputError("pred_class_probs must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(probs)):
        raise InvalidInputError("pred_class_probs must be finite")
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise InvalidInputError(
            f"pred_class_probs must sum to 1 within 1e-6, got {float(probs.sum())!r}"
        )
    if not 0 <= gt.class_id < probs.size:
        raise InvalidInputError(
            f"gt.class_id {gt.class_id} out of range for {probs.size} class probabilities"
        )
    return lambda_cls * (1.0 - float(probs[gt.class_id])) + lambda_box * geo_cost(gt, pred)


def _row_ordered_total(costs: np.ndarray, cols: Sequence[int]) -> float:
    total = 0.0
    for row, col in enumerate(cols):
        total += float(costs[row, col])
    return total


def _lexicographic_refine(
    costs: np.ndarray, cols: List[int], u: np.ndarray, v: np.ndarray
) -> List[int]:
    """Pick the lexicographically smallest assignment among exact-cost ties.

    Row by row, try every smaller unused column whose reduced cost permits
    membership in an optimal solution; accept a swap only when re-solving
    the remainder reproduces the optimal total exactly (row-ordered float
    sum). Unique optima pass through with no extra solves.
    """
    n_rows, n_cols = costs.shape
    base_total = _row_ordered_total(costs, cols)
    used: set[int] = set()
    for row in range(n_rows):
        current = cols[row]
        for cand in range(current):
            if cand in used:
                continue
            reduced = float(costs[row, cand]) - float(u[row]) - float(v[cand])
            if reduced > 1e-9 * (1.0 + abs(float(costs[row, cand]))):
                continue
            forced = _resolve_with_prefix(costs, cols[:row], cand, used)
            if forced is not None and _row_ordered_total(costs, forced) == base_total:
                cols = forced
                break
        used.add(cols[row])
    return cols


def _resolve_with_prefix(
    costs: np.ndarray, prefix: List[int], cand: int, used: set[int]
) -> List[int] | None:
    """Complete an assignment that fixes `prefix` plus `cand` for the next row."""
    n_rows, n_cols = costs.shape
    row = len(prefix)
    taken = set(used)
    taken.add(cand)
    rest_rows = list(range(row + 1, n_rows))
    free_cols = [c for c in range(n_cols) if c not in taken]
    if len(rest_rows) > len(free_cols):
        return None
    full = prefix + [cand]
    if rest_rows:
        sub = costs[np.ix_(rest_rows, free_cols)]
        sub_cols, _, _ = _kernels.lap_solve(np.ascontiguousarray(sub))
        full = full + [free_cols[int(c)] for c in sub_cols]
    return full


def solve_assignment(costs) -> MatchResult:
    """Minimum-total-cost injective assignment of rows to columns.

    Accepts an (M, N) matrix with finite entries and M <= N; unmatched
    columns are treated as if padded with a large constant sentinel, so
    they never distort the choice among real pairs. Exact-cost ties
    resolve to the lexicographically smallest assignment (by row, then
    column index), which keeps repeated runs and golden files stable.
    """
    c = np.ascontiguousarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
        raise InvalidInputError(f"cost matrix must be 2-D and non-empty, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("cost matrix entries must be finite")
    n_rows, n_cols = c.shape
    if n_rows > n_cols:
        raise InfeasibleError(
            f"cannot assign {n_rows} rows to {n_cols} columns; rows must not exceed columns"
        )
    row_to_col, u, v = _kernels.lap_solve(c)
    cols = _lexicographic_refine(c, [int(j) for j in row_to_col], u, v)
    per_pair = [float(c[row, col]) for row, col in enumerate(cols)]
    total = 0.0
    for value in per_pair:
        total += value
    return MatchResult(
        assignment={row: int(col) for row, col in enumerate(cols)},
        total_cost=total,
        per_pair_cost=per_pair,
    )


def geo_hungarian_match(
    gts: Sequence[Box3D], preds: Sequence[Box3D], raw_yaw_l1: bool = False
) -> MatchResult:
    """Class-blind optimal matching under geo_cost."""
    if len(gts) == 0 or len(preds) == 0:
        raise InvalidInputError("geo_hungarian_match requires at least one box on each side")
    return solve_assignment(geo_cost_matrix(gts, preds, raw_yaw_l1=raw_yaw_l1))


def hungarian_match(
    gts: Sequence[Box3D],
    preds: Sequence[Box3D],
    pred_class_probs: Sequence[Sequence[float]],
    lambda_cls: float = DEFAULT_LAMBDA_CLS,
    lambda_box: float = DEFAULT_LAMBDA_BOX,
) -> MatchResult:
    """Optimal matching under the conventional class-plus-box cost."""
    if len(gts) == 0 or len(preds) == 0:
        raise InvalidInputError("hungarian_match requires at least one box on each side")
    if len(pred_class_probs) != len(preds):
        raise InvalidInputError("pred_class_probs must align with preds")
    matrix = np.empty((len(gts), len(preds)))
    for i, gt in enumerate(gts):
        for j, pred in enumerate(preds):
            matrix[i, j] = hungarian_cost(
                gt, pred, pred_class_probs[j], lambda_cls=lambda_cls, lambda_box=lambda_box
            )
    return solve_assignment(matrix)


def wrap_angle_difference(r1: float, r2: float) -> float:
    """Geodesic angular distance in [0, pi] between two yaws."""
    if not (math.isfinite(r1) and math.isfinite(r2)):
        raise InvalidInputError("angles must be finite")
    d = abs(r1 - r2) % TWO_PI
    return min(d, TWO_PI - d)
