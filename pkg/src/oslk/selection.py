"""Pseudo-label selection for unknown objects.

Pipeline per scene: drop proposals overlapping known ground truth, keep the
top-k_o by objectness as candidates, score each candidate's feature
response in a reduced BEV map, combine objectness with novelty
(1 - response) into a joint score, and keep the top-k_u as pseudo labels.
Pseudo labels carry their objectness as a soft weight for downstream
classification losses.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

from .bevgrid import BevGrid, ResponseMap, joint_score, reduce_grid, window_response
from .errors import InvalidInputError
from .geometry import Box3D, pairwise_bev_iou, pairwise_iou3d
from .matching import MatchResult

FOCAL_PROB_CLAMP = 1e-7

_SELECTION_KEYS = ("joint", "objectness", "novelty")


@dataclass(frozen=True)
class Proposal:
    """A detected box with a predicted objectness in [0, 1]."""

    box: Box3D
    objectness: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.objectness) and 0.0 <= self.objectness <= 1.0):
            raise InvalidInputError(
                f"proposal objectness must lie in [0, 1], got {self.objectness!r}"
            )
        object.__setattr__(self, "objectness", float(self.objectness))


@dataclass(frozen=True)
class PipelineConfig:
    """Candidate and pseudo-label budgets plus filtering/reduction choices."""

    k_o: int = 30
    k_u: int = 10
    gt_filter_iou: float = 0.1
    reduction: str = "mean"

    def __post_init__(self) -> None:
        if not (isinstance(self.k_o, int) and self.k_o >= 1):
            raise InvalidInputError(f"k_o must be an integer >= 1, got {self.k_o!r}")
        if not (isinstance(self.k_u, int) and self.k_u >= 1):
            raise InvalidInputError(f"k_u must be an integer >= 1, got {self.k_u!r}")
        if self.k_u > self.k_o:
            raise InvalidInputError(
                f"k_u ({self.k_u}) must not exceed k_o ({self.k_o})"
            )
        if not (math.isfinite(self.gt_filter_iou) and 0.0 <= self.gt_filter_iou <= 1.0):
            raise InvalidInputError(
                f"gt_filter_iou must lie in [0, 1], got {self.gt_filter_iou!r}"
            )
        if self.reduction not in ("mean", "pca"):
            raise InvalidInputError(
                f"reduction must be 'mean' or 'pca', got {self.reduction!r}"
            )


@dataclass(frozen=True)
class PseudoLabel:
    """A selected candidate with its full score provenance."""

    box: Box3D
    objectness: float
    feature_response: float
    joint: float

    def __post_init__(self) -> None:
        for name in ("objectness", "feature_response", "joint"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class PseudoLabelSet:
    """Pseudo labels for one scene, sorted by joint score, best first."""

    entries: Tuple[PseudoLabel, ...]
    scene_id: str

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        for earlier, later in zip(entries, entries[1:]):
            if later.joint > earlier.joint:
                raise InvalidInputError("entries must be sorted by joint score, descending")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class WeightedLabel:
    """A training label: a classed box plus a loss weight."""

    box: Box3D
    weight: float

    def __post_init__(self) -> None:
        if self.box.class_id is None:
            raise InvalidInputError("weighted labels require box.class_id")
        if not (math.isfinite(self.weight) and 0.0 <= self.weight <= 1.0):
            raise InvalidInputError(f"weight must lie in [0, 1], got {self.weight!r}")


def gt_filter(
    proposals: Sequence[Proposal],
    known_gt: Sequence[Box3D],
    threshold: float,
    mode: str = "bev",
) -> List[Proposal]:
    """Keep proposals whose max IoU against every known box is <= threshold.

    mode selects the overlap measure: rotated footprint IoU ("bev", the
    default) or volume IoU ("3d"). With no known boxes this is the
    identity. Idempotent: filtering a filtered list changes nothing.
    """
    if not (math.isfinite(threshold) and 0.0 <= threshold <= 1.0):
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold!r}")
    if mode not in ("bev", "3d"):
        raise InvalidInputError(f"mode must be 'bev' or '3d', got {mode!r}")
    if not proposals or not known_gt:
        return list(proposals)
    boxes = [p.box for p in proposals]
    if mode == "bev":
        overlap = pairwise_bev_iou(boxes, list(known_gt))
    else:
        overlap = pairwise_iou3d(boxes, list(known_gt))
    keep = overlap.max(axis=1) <= threshold
    return [p for p, ok in zip(proposals, keep) if ok]


def top_k_candidates(proposals: Sequence[Proposal], k_o: int) -> List[Proposal]:
    """Top k_o proposals by objectness; ties keep the earlier proposal."""
    if k_o < 1:
        raise InvalidInputError(f"k_o must be >= 1, got {k_o!r}")
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].objectness, i))
    return [proposals[i] for i in order[:k_o]]


def score_candidates(
    candidates: Sequence[Proposal], response: ResponseMap
) -> List[PseudoLabel]:
    """Attach feature response and joint score to each candidate."""
    scored = []
    for cand in candidates:
        s_fea = window_response(response, cand.box)
        scored.append(
            PseudoLabel(
                box=cand.box,
                objectness=cand.objectness,
                feature_response=s_fea,
                joint=joint_score(cand.objectness, s_fea),
            )
        )
    return scored


def _ranking_value(label: PseudoLabel, key: str) -> float:
    if key == "joint":
        return label.joint
    if key == "objectness":
        return label.objectness
    if key == "novelty":
        return 1.0 - label.feature_response
    raise InvalidInputError(f"key must be one of {_SELECTION_KEYS}, got {key!r}")


def select_top(
    candidates: Sequence[Proposal],
    response: ResponseMap,
    k_u: int,
    key: str = "joint",
    scene_id: str = "",
) -> PseudoLabelSet:
    """Select the top k_u candidates under a named ranking score.

    key 'joint' ranks by objectness * novelty (the default pipeline);
    'objectness' ignores the map; 'novelty' ignores objectness. Ties keep
    the earlier candidate. Entries are re-sorted by joint score for the
    output contract.
    """
    if k_u < 1:
        raise InvalidInputError(f"k_u must be >= 1, got {k_u!r}")
    scored = score_candidates(candidates, response)
    order = sorted(
        range(len(scored)), key=lambda i: (-_ranking_value(scored[i], key), i)
    )
    picked = [scored[i] for i in order[:k_u]]
    picked.sort(key=lambda lab: -lab.joint)
    return PseudoLabelSet(entries=tuple(picked), scene_id=scene_id)


def joint_select(
    candidates: Sequence[Proposal],
    response: ResponseMap,
    k_u: int,
    scene_id: str = "",
) -> PseudoLabelSet:
    """Top k_u candidates by joint score (objectness times novelty)."""
    return select_top(candidates, response, k_u, key="joint", scene_id=scene_id)


def run_scene_pipeline(
    proposals: Sequence[Proposal],
    known_gt: Sequence[Box3D],
    grid: BevGrid,
    config: PipelineConfig,
    scene_id: str = "",
) -> PseudoLabelSet:
    """Full per-scene selection: filter, rank, pool responses, select."""
    survivors = gt_filter(proposals, known_gt, config.gt_filter_iou)
    candidates = top_k_candidates(survivors, config.k_o)
    response = reduce_grid(grid, config.reduction)
    return joint_select(candidates, response, config.k_u, scene_id=scene_id)


def merge_labels(
    known_gt: Sequence[Box3D],
    pseudo: PseudoLabelSet,
    unknown_class_id: int,
) -> List[WeightedLabel]:
    """Combine known boxes (weight 1) with pseudo labels (soft weights).

    Pseudo boxes are tagged with unknown_class_id, which must not collide
    with any known class id. Known boxes must all carry a class id.
    """
    known_ids = set()
    for box in known_gt:
        if box.class_id is None:
            raise InvalidInputError("known boxes must carry class_id")
        known_ids.add(box.class_id)
    if unknown_class_id in known_ids:
        raise InvalidInputError(
            f"unknown_class_id {unknown_class_id} collides with a known class id"
        )
    merged = [WeightedLabel(box=box, weight=1.0) for box in known_gt]
    for label in pseudo.entries:
        tagged = Box3D(
            x=label.box.x,
            y=label.box.y,
            z=label.box.z,
            w=label.box.w,
            l=label.box.l,
            h=label.box.h,
            r=label.box.r,
            class_id=unknown_class_id,
        )
        merged.append(WeightedLabel(box=tagged, weight=label.objectness))
    return merged


def focal_loss(p: float, target: int, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Binary focal loss on a predicted probability.

    p is clamped away from exact 0/1 so the logarithm stays finite.
    """
    if target not in (0, 1):
        raise InvalidInputError(f"target must be 0 or 1, got {target!r}")
    if not (math.isfinite(p) and 0.0 <= p <= 1.0):
        raise InvalidInputError(f"p must lie in [0, 1], got {p!r}")
    if not (math.isfinite(alpha) and 0.0 <= alpha <= 1.0):
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha!r}")
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise InvalidInputError(f"gamma must be >= 0, got {gamma!r}")
    p = min(max(p, FOCAL_PROB_CLAMP), 1.0 - FOCAL_PROB_CLAMP)
    if target == 1:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    return -(1.0 - alpha) * p**gamma * math.log(1.0 - p)


def soft_weighted_unknown_loss(
    pseudo: PseudoLabelSet,
    pred_unknown_probs: Sequence[float],
    assignment: MatchResult,
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> float:
    """Objectness-weighted focal loss over matched pseudo labels.

    Each pseudo label i contributes objectness_i * focal(p_sigma(i), 1),
    where sigma is the given assignment into pred_unknown_probs. The loss
    is linear in the weights: scaling every objectness scales the loss.
    """
    if not pseudo.entries:
        return 0.0
    total = 0.0
    for row in sorted(assignment.assignment):
        col = assignment.assignment[row]
        if not 0 <= row < len(pseudo.entries):
            raise InvalidInputError(f"assignment row {row} out of range for pseudo labels")
        if not 0 <= col < len(pred_unknown_probs):
            raise InvalidInputError(f"assignment column {col} out of range for predictions")
        label = pseudo.entries[row]
        total += label.objectness * focal_loss(
            float(pred_unknown_probs[col]), 1, alpha=alpha, gamma=gamma
        )
    return total


def selection_precision(
    pseudo_sets: Sequence[PseudoLabelSet],
    unknown_gt_per_scene: Sequence[Sequence[Box3D]],
    match_distance: float = 2.0,
) -> float:
    """Fraction of selected pseudo labels that hit a true unknown box.

    A pseudo label hits when an injective greedy match (by joint score,
    then planar center distance) pairs it with an unknown box within
    match_distance meters. Aggregated over scenes: total hits over total
    selections; 0.0 when nothing was selected.
    """
    if len(pseudo_sets) != len(unknown_gt_per_scene):
        raise InvalidInputError("pseudo_sets and unknown_gt_per_scene must align")
    hits = 0
    total = 0
    for labels, gts in zip(pseudo_sets, unknown_gt_per_scene):
        total += len(labels.entries)
        taken = [False] * len(gts)
        for label in labels.entries:
            best = -1
            best_d = math.inf
            for gi, gt in enumerate(gts):
                if taken[gi]:
                    continue
                d = math.hypot(label.box.x - gt.x, label.box.y - gt.y)
                if d < best_d:
                    best = gi
                    best_d = d
            if best >= 0 and best_d <= match_distance:
                taken[best] = True
                hits += 1
    if total == 0:
        return 0.0
    return hits / total


_ENTRY_BOX_KEYS = ("x", "y", "z", "w", "l", "h", "r")


def pseudo_set_to_record(labels: PseudoLabelSet) -> dict:
    """Plain-JSON form of one scene's pseudo labels (the on-disk line format)."""
    entries = []
    for label in labels.entries:
        entry = {k: getattr(label.box, k) for k in _ENTRY_BOX_KEYS}
        entry["s_obj"] = label.objectness
        entry["s_fea"] = label.feature_response
        entry["s_jos"] = label.joint
        entries.append(entry)
    return {"scene_id": labels.scene_id, "entries": entries}


def pseudo_set_from_record(record: dict) -> PseudoLabelSet:
    if not isinstance(record, dict) or "scene_id" not in record or "entries" not in record:
        raise InvalidInputError("pseudo-label record needs 'scene_id' and 'entries'")
    entries = []
    for entry in record["entries"]:
        missing = [k for k in (*_ENTRY_BOX_KEYS, "s_obj", "s_fea", "s_jos") if k not in entry]
        if missing:
            raise InvalidInputError(f"pseudo-label entry missing fields: {missing}")
        box = Box3D(class_id=None, **{k: float(entry[k]) for k in _ENTRY_BOX_KEYS})
        entries.append(
            PseudoLabel(
                box=box,
                objectness=float(entry["s_obj"]),
                feature_response=float(entry["s_fea"]),
                joint=float(entry["s_jos"]),
            )
        )
    return PseudoLabelSet(entries=tuple(entries), scene_id=str(record["scene_id"]))


def save_pseudo_labels(pseudo_sets: Sequence[PseudoLabelSet], path) -> None:
    """Write pseudo labels as JSON Lines, one scene per line, in scene-id order."""
    ordered = sorted(pseudo_sets, key=lambda s: s.scene_id)
    with Path(path).open("w", encoding="utf-8") as fh:
        for labels in ordered:
            fh.write(json.dumps(pseudo_set_to_record(labels), sort_keys=True))
            fh.write("\n")


def load_pseudo_labels(path) -> List[PseudoLabelSet]:
    """Read a pseudo-label JSON Lines file; blank lines are ignored."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            out.append(pseudo_set_from_record(record))
    return out
