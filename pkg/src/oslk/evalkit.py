"""Open-set detection metrics at desk scale.

Two matching protocols: greedy center-distance matching (averaged over a
set of distance thresholds) and greedy volume-IoU matching (per-class
thresholds). Precision is integrated over evenly spaced recall positions;
classes with no ground truth report an absent value rather than zero.
Unknown objects are treated as one super-class identified by a caller
chosen class id.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .geometry import Box3D, pairwise_iou3d
from .selection import PseudoLabelSet, gt_filter, top_k_candidates

DEFAULT_DISTANCE_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
DEFAULT_IOU_THRESHOLD_KNOWN = 0.5
DEFAULT_IOU_THRESHOLD_UNKNOWN = 0.1
DEFAULT_INTERPOLATION_POINTS = 40

_BOX_KEYS = ("x", "y", "z", "w", "l", "h", "r")


@dataclass(frozen=True)
class Detection:
    """A classed box with a confidence in [0, 1]."""

    box: Box3D
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or isinstance(self.class_id, bool):
            raise InvalidInputError(f"class_id must be an integer, got {self.class_id!r}")
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise InvalidInputError(
                f"confidence must lie in [0, 1], got {self.confidence!r}"
            )
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass
class MatchOutcome:
    """Greedy matching result for one scene: index pairs plus leftovers."""

    pairs: List[Tuple[int, int]]
    unmatched_dets: List[int]
    unmatched_gts: List[int]


def _greedy_match(
    dets: Sequence[Detection],
    gts: Sequence[Box3D],
    better_than,
) -> MatchOutcome:
    """Shared greedy loop: confidence-descending, injective, class-aware.

    better_than(det_idx, gt_idx, best_key) returns a new sort key when the
    (det, gt) pair qualifies and improves on best_key, else None.
    """
    for gt in gts:
        if gt.class_id is None:
            raise InvalidInputError("evaluation ground truth must carry class_id")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    gt_taken = [False] * len(gts)
    det_matched_to = [-1] * len(dets)
    for di in order:
        best_key = None
        best_gi = -1
        for gi, gt in enumerate(gts):
            if gt_taken[gi] or gt.class_id != dets[di].class_id:
                continue
            key = better_than(di, gi, best_key)
            if key is not None:
                best_key = key
                best_gi = gi
        if best_gi >= 0:
            gt_taken[best_gi] = True
            det_matched_to[di] = best_gi
    pairs = [(di, gi) for di, gi in enumerate(det_matched_to) if gi >= 0]
    unmatched_dets = [di for di, gi in enumerate(det_matched_to) if gi < 0]
    unmatched_gts = [gi for gi, taken in enumerate(gt_taken) if not taken]
    return MatchOutcome(pairs=pairs, unmatched_dets=unmatched_dets, unmatched_gts=unmatched_gts)


def match_by_center_distance(
    dets: Sequence[Detection], gts: Sequence[Box3D], d_thresh: float
) -> MatchOutcome:
    """Greedy matching by planar center distance.

    Detections are visited confidence-descending (ties keep input order);
    each takes the nearest unmatched same-class box within d_thresh meters
    (distance ties keep the lowest box index).
    """
    if not (math.isfinite(d_thresh) and d_thresh >= 0.0):
        raise InvalidInputError(f"d_thresh must be >= 0, got {d_thresh!r}")
    if dets and gts:
        det_xy = np.array([[d.box.x, d.box.y] for d in dets])
        gt_xy = np.array([[g.x, g.y] for g in gts])
        dist = np.sqrt(((det_xy[:, None, :] - gt_xy[None, :, :]) ** 2).sum(axis=-1))
    else:
        dist = np.zeros((len(dets), len(gts)))

    def qualify(di: int, gi: int, best_key):
        d = float(dist[di, gi])
        if d > d_thresh:
            return None
        if best_key is None or d < best_key:
            return d
        return None

    return _greedy_match(dets, gts, qualify)


def match_by_iou(
    dets: Sequence[Detection], gts: Sequence[Box3D], iou_thresh: float
) -> MatchOutcome:
    """Greedy matching by volume IoU.

    Detections are visited confidence-descending (ties keep input order);
    each takes the highest-IoU unmatched same-class box with IoU at or
    above iou_thresh (IoU ties keep the lowest box index).
    """
    if not (math.isfinite(iou_thresh) and 0.0 < iou_thresh <= 1.0):
        raise InvalidInputError(f"iou_thresh must lie in (0, 1], got {iou_thresh!r}")
    if dets and gts:
        iou = pairwise_iou3d([d.box for d in dets], list(gts))
    else:
        iou = np.zeros((len(dets), len(gts)))

    def qualify(di: int, gi: int, best_key):
        value = float(iou[di, gi])
        if value < iou_thresh:
            return None
        if best_key is None or value > best_key:
            return value
        return None

    return _greedy_match(dets, gts, qualify)


def average_precision(
    confidences: Sequence[float],
    tp_flags: Sequence[bool],
    n_gt: int,
    n_points: int = DEFAULT_INTERPOLATION_POINTS,
) -> Optional[float]:
    """Interpolated average precision over evenly spaced recall positions.

    Pooled detections are ranked confidence-descending (ties keep input
    order). Precision at each recall position r is the best precision
    achieved at recall >= r, zero where that recall is never reached.
    Returns None when there is no ground truth: an absent value, not 0.
    """
    if n_gt < 0:
        raise InvalidInputError(f"n_gt must be >= 0, got {n_gt}")
    if len(confidences) != len(tp_flags):
        raise InvalidInputError("confidences and tp_flags must align")
    if n_points < 1:
        raise InvalidInputError(f"n_points must be >= 1, got {n_points}")
    if n_gt == 0:
        return None
    if len(confidences) == 0:
        return 0.0
    order = sorted(range(len(confidences)), key=lambda i: (-float(confidences[i]), i))
    tp = np.array([bool(tp_flags[i]) for i in order], dtype=np.float64)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # best precision at or beyond each ranked position
    best_right = np.maximum.accumulate(precision[::-1])[::-1]
    grid = (np.arange(n_points, dtype=np.float64) + 1.0) / n_points
    idx = np.searchsorted(recall, grid, side="left")
    interpolated = np.where(idx < len(recall), best_right[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(interpolated.mean())


def recall_score(n_matched: int, n_gt: int) -> Optional[float]:
    """Matched fraction of ground truth; None (absent) when there is none."""
    if n_gt == 0:
        return None
    return n_matched / n_gt


@dataclass
class EvalReport:
    """Aggregate metrics for one evaluation run.

    Absent metrics (no ground truth for the slice) are None and stay None
    in the JSON form. ar_unknown applies to the distance protocol,
    recall_unknown to the IoU protocol's operating point.
    """

    protocol: str
    map_known: Optional[float]
    ap_unknown: Optional[float]
    ar_unknown: Optional[float]
    recall_unknown: Optional[float]
    per_class_ap: Dict[int, Optional[float]]
    thresholds_used: object
    n_scenes: int = 0
    config_echo: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "map_known": self.map_known,
            "ap_unknown": self.ap_unknown,
            "ar_unknown": self.ar_unknown,
            "recall_unknown": self.recall_unknown,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "thresholds_used": self.thresholds_used,
            "n_scenes": self.n_scenes,
            "config_echo": self.config_echo,
        }


def _pool_class_records(
    dets_per_scene: Sequence[Sequence[Detection]],
    outcomes: Sequence[MatchOutcome],
) -> Dict[int, List[Tuple[float, bool]]]:
    """(confidence, is_tp) per class, pooled across scenes in scene order."""
    pooled: Dict[int, List[Tuple[float, bool]]] = {}
    for dets, outcome in zip(dets_per_scene, outcomes):
        matched = {di for di, _ in outcome.pairs}
        for di, det in enumerate(dets):
            pooled.setdefault(det.class_id, []).append((det.confidence, di in matched))
    return pooled


def _gt_class_counts(gts_per_scene: Sequence[Sequence[Box3D]]) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for gts in gts_per_scene:
        for gt in gts:
            if gt.class_id is None:
                raise InvalidInputError("evaluation ground truth must carry class_id")
            counts[gt.class_id] = counts.get(gt.class_id, 0) + 1
    return counts


def _mean_or_none(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return float(sum(present) / len(present))


def evaluate_distance_protocol(
    dets_per_scene: Sequence[Sequence[Detection]],
    gts_per_scene: Sequence[Sequence[Box3D]],
    unknown_class_id: int,
    thresholds: Sequence[float] = DEFAULT_DISTANCE_THRESHOLDS,
    n_points: int = DEFAULT_INTERPOLATION_POINTS,
) -> EvalReport:
    """Center-distance evaluation averaged over a threshold sweep.

    Per threshold: greedy scene-level matching, AP per class from the
    pooled ranking, plus unknown recall. Per-class AP and recall then
    average over thresholds; map_known averages per-class AP over the
    known classes present in the ground truth.
    """
    if len(dets_per_scene) != len(gts_per_scene):
        raise InvalidInputError("detections and ground truth must align per scene")
    if not thresholds:
        raise InvalidInputError("need at least one distance threshold")
    gt_counts = _gt_class_counts(gts_per_scene)
    class_aps: Dict[int, List[Optional[float]]] = {cid: [] for cid in gt_counts}
    unknown_recalls: List[Optional[float]] = []
    for d_thresh in thresholds:
        outcomes = [
            match_by_center_distance(dets, gts, d_thresh)
            for dets, gts in zip(dets_per_scene, gts_per_scene)
        ]
        pooled = _pool_class_records(dets_per_scene, outcomes)
        for cid, n_gt in gt_counts.items():
            records = pooled.get(cid, [])
            class_aps[cid].append(
                average_precision(
                    [c for c, _ in records], [t for _, t in records], n_gt, n_points
                )
            )
        matched_unknown = sum(
            1
            for gts, outcome in zip(gts_per_scene, outcomes)
            for _, gi in outcome.pairs
            if gts[gi].class_id == unknown_class_id
        )
        unknown_recalls.append(
            recall_score(matched_unknown, gt_counts.get(unknown_class_id, 0))
        )
    per_class_ap = {cid: _mean_or_none(aps) for cid, aps in class_aps.items()}
    known_aps = [ap for cid, ap in per_class_ap.items() if cid != unknown_class_id]
    return EvalReport(
        protocol="distance",
        map_known=_mean_or_none(known_aps),
        ap_unknown=per_class_ap.get(unknown_class_id),
        ar_unknown=_mean_or_none(unknown_recalls),
        recall_unknown=None,
        per_class_ap=per_class_ap,
        thresholds_used=[float(t) for t in thresholds],
        n_scenes=len(gts_per_scene),
    )


def evaluate_iou_protocol(
    dets_per_scene: Sequence[Sequence[Detection]],
    gts_per_scene: Sequence[Sequence[Box3D]],
    unknown_class_id: int,
    class_thresholds: Optional[Mapping[int, float]] = None,
    default_known_threshold: float = DEFAULT_IOU_THRESHOLD_KNOWN,
    unknown_threshold: float = DEFAULT_IOU_THRESHOLD_UNKNOWN,
    confidence_threshold: float = 0.0,
    n_points: int = DEFAULT_INTERPOLATION_POINTS,
) -> EvalReport:
    """Volume-IoU evaluation with per-class thresholds.

    AP per class uses the full confidence ranking; recall_unknown counts
    matches among detections at or above confidence_threshold (the
    operating point, which has no privileged default).
    """
    if len(dets_per_scene) != len(gts_per_scene):
        raise InvalidInputError("detections and ground truth must align per scene")
    gt_counts = _gt_class_counts(gts_per_scene)
    thresholds: Dict[int, float] = {}
    for cid in gt_counts:
        if class_thresholds is not None and cid in class_thresholds:
            thresholds[cid] = float(class_thresholds[cid])
        elif cid == unknown_class_id:
            thresholds[cid] = float(unknown_threshold)
        else:
            thresholds[cid] = float(default_known_threshold)

    per_class_ap: Dict[int, Optional[float]] = {}
    for cid, n_gt in gt_counts.items():
        records: List[Tuple[float, bool]] = []
        for dets, gts in zip(dets_per_scene, gts_per_scene):
            class_dets = [d for d in dets if d.class_id == cid]
            class_gts = [g for g in gts if g.class_id == cid]
            outcome = match_by_iou(class_dets, class_gts, thresholds[cid])
            matched = {di for di, _ in outcome.pairs}
            records.extend(
                (d.confidence, di in matched) for di, d in enumerate(class_dets)
            )
        per_class_ap[cid] = average_precision(
            [c for c, _ in records], [t for _, t in records], n_gt, n_points
        )

    n_unknown_gt = gt_counts.get(unknown_class_id, 0)
    matched_unknown = 0
    for dets, gts in zip(dets_per_scene, gts_per_scene):
        operating = [
            d
            for d in dets
            if d.class_id == unknown_class_id and d.confidence >= confidence_threshold
        ]
        unknown_gts = [g for g in gts if g.class_id == unknown_class_id]
        if not operating or not unknown_gts:
            continue
        outcome = match_by_iou(operating, unknown_gts, thresholds.get(unknown_class_id, unknown_threshold))
        matched_unknown += len(outcome.pairs)

    known_aps = [ap for cid, ap in per_class_ap.items() if cid != unknown_class_id]
    return EvalReport(
        protocol="iou",
        map_known=_mean_or_none(known_aps),
        ap_unknown=per_class_ap.get(unknown_class_id),
        ar_unknown=None,
        recall_unknown=recall_score(matched_unknown, n_unknown_gt),
        per_class_ap=per_class_ap,
        thresholds_used={str(cid): thr for cid, thr in sorted(thresholds.items())},
        n_scenes=len(gts_per_scene),
    )


def _greedy_center_hits(
    ranked_boxes: Sequence[Box3D], gts: Sequence[Box3D], match_distance: float
) -> int:
    """Injective nearest-unmatched matching in rank order; returns hit count."""
    taken = [False] * len(gts)
    hits = 0
    for box in ranked_boxes:
        best = -1
        best_d = math.inf
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            d = math.hypot(box.x - gt.x, box.y - gt.y)
            if d < best_d:
                best = gi
                best_d = d
        if best >= 0 and best_d <= match_distance:
            taken[best] = True
            hits += 1
    return hits


def ko_proportion_analysis(
    scenes: Sequence,
    k_o_values: Sequence[int],
    gt_filter_iou: float = 0.1,
    match_distance: float = 2.0,
) -> List[dict]:
    """Matched share of the candidate budget as the budget grows.

    For each k_o: filter proposals against known boxes, keep the top k_o
    by objectness, and count candidates that match an unknown box within
    match_distance meters (injective, rank order). Reports matched, total,
    and matched/total as a percentage. With well-calibrated objectness the
    matched count saturates while the budget grows, so the percentage is
    non-increasing in k_o.
    """
    for k_o in k_o_values:
        if not isinstance(k_o, int) or k_o < 1:
            raise InvalidInputError(f"k_o values must be integers >= 1, got {k_o!r}")
    ranked_per_scene = []
    for scene in scenes:
        survivors = gt_filter(scene.proposals, scene.known_gt, gt_filter_iou)
        ranked_per_scene.append(top_k_candidates(survivors, max(k_o_values)))
    rows = []
    for k_o in k_o_values:
        matched = 0
        total = 0
        for scene, ranked in zip(scenes, ranked_per_scene):
            cands = ranked[:k_o]
            total += len(cands)
            matched += _greedy_center_hits(
                [c.box for c in cands], scene.unknown_gt, match_distance
            )
        percent = 100.0 * matched / total if total else 0.0
        rows.append({"k_o": k_o, "matched": matched, "total": total, "percent": percent})
    return rows


def pseudo_sets_to_detections(
    pseudo_sets: Sequence[PseudoLabelSet], unknown_class_id: int
) -> Dict[str, List[Detection]]:
    """View pseudo labels as unknown-class detections (confidence = joint score)."""
    out: Dict[str, List[Detection]] = {}
    for labels in pseudo_sets:
        out[labels.scene_id] = [
            Detection(box=entry.box, class_id=unknown_class_id, confidence=entry.joint)
            for entry in labels.entries
        ]
    return out


def save_detections(dets_by_scene: Mapping[str, Sequence[Detection]], path, unknown_class_id: int) -> None:
    """Write detections as JSON Lines, one scene per line, sorted by scene id."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for scene_id in sorted(dets_by_scene):
            records = []
            for det in dets_by_scene[scene_id]:
                cls: object = det.class_id
                if det.class_id == unknown_class_id:
                    cls = "unknown"
                records.append(
                    {
                        **{k: getattr(det.box, k) for k in _BOX_KEYS},
                        "class": cls,
                        "confidence": det.confidence,
                    }
                )
            fh.write(json.dumps({"scene_id": scene_id, "detections": records}, sort_keys=True))
            fh.write("\n")


def load_detections(path, unknown_class_id: int) -> Dict[str, List[Detection]]:
    """Read a detections JSON Lines file.

    Accepts two record shapes: {"scene_id", "detections": [...]} with
    integer classes or the literal "unknown", and selection output
    {"scene_id", "entries": [...]} whose entries become unknown-class
    detections with the joint score as confidence.
    """
    path = Path(path)
    out: Dict[str, List[Detection]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            scene_id = record.get("scene_id")
            if not isinstance(scene_id, str) or not scene_id:
                raise InvalidInputError(f"{path}:{lineno}: bad scene_id {scene_id!r}")
            if scene_id in out:
                raise InvalidInputError(f"{path}:{lineno}: duplicate scene_id {scene_id!r}")
            dets: List[Detection] = []
            if "detections" in record:
                for entry in record["detections"]:
                    cls = entry.get("class")
                    if cls == "unknown":
                        cls = unknown_class_id
                    if isinstance(cls, bool) or not isinstance(cls, int):
                        raise InvalidInputError(
                            f"{path}:{lineno}: class must be an integer or 'unknown', got {cls!r}"
                        )
                    box = Box3D(class_id=None, **{k: float(entry[k]) for k in _BOX_KEYS})
                    dets.append(
                        Detection(box=box, class_id=cls, confidence=float(entry["confidence"]))
                    )
            elif "entries" in record:
                for entry in record["entries"]:
                    box = Box3D(class_id=None, **{k: float(entry[k]) for k in _BOX_KEYS})
                    dets.append(
                        Detection(
                            box=box,
                            class_id=unknown_class_id,
                            confidence=float(entry["s_jos"]),
                        )
                    )
            else:
                raise InvalidInputError(
                    f"{path}:{lineno}: record needs 'detections' or 'entries'"
                )
            out[scene_id] = dets
    return out


def relabel_unknown(gts: Sequence[Box3D], unknown_class_id: int) -> List[Box3D]:
    """Tag unclassed boxes with the unknown class id (evaluation view)."""
    out = []
    for gt in gts:
        if gt.class_id is None:
            out.append(
                Box3D(
                    x=gt.x, y=gt.y, z=gt.z, w=gt.w, l=gt.l, h=gt.h, r=gt.r,
                    class_id=unknown_class_id,
                )
            )
        else:
            out.append(gt)
    return out
