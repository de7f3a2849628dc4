"""Command-line interface.

Subcommands:
  simulate   write a synthetic benchmark (scenes + feature grids + manifest)
  select     run pseudo-label selection over a scene file
  eval       score detections or pseudo-labels against scene ground truth
  ablate     sweep selection variants and budgets, emit a CSV table
  match      solve an assignment problem from a cost-matrix CSV

Exit codes: 0 success, 2 config or input validation failure, 3 I/O failure,
4 internal invariant violation. Logging level comes from the OSLK_LOG
environment variable (DEBUG/INFO/WARNING/ERROR); default WARNING.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bevgrid import read_bevg, reduce_grid
from .config import EvalConfig, load_run_config
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
    evaluate_distance_protocol,
    evaluate_iou_protocol,
    ko_proportion_analysis,
    load_detections,
    relabel_unknown,
)
from .geometry import Box3D
from .matching import solve_assignment
from .scene import (
    Scene,
    load_scenes,
    resolve_grid_path,
    scene_from_record,
    scene_to_record,
)
from .selection import (
    PipelineConfig,
    PseudoLabelSet,
    gt_filter,
    pseudo_set_to_record,
    run_scene_pipeline,
    score_candidates,
    selection_precision,
    top_k_candidates,
)
from .simulator import generate_benchmark

logger = logging.getLogger(__name__)

_ABLATE_VARIANTS = ("objectness", "novelty", "joint_mean", "joint_pca")


def _setup_logging() -> None:
    name = os.environ.get("OSLK_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_path: Path, config_echo: dict, inputs: Dict[str, Path]) -> Path:
    manifest = {
        "config_echo": config_echo,
        "inputs": {name: _sha256(p) for name, p in sorted(inputs.items())},
        "outputs": {out_path.name: _sha256(out_path)},
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path


def _parse_int_list(text: str, flag: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} expects at least one value")
    return values


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate(args: argparse.Namespace) -> int:
    overrides = {"sim.seed": args.seed}
    cfg = load_run_config(args.config, overrides)
    out_dir = Path(args.out)
    scenes_path = generate_benchmark(
        cfg.sim,
        args.scenes,
        out_dir,
        scoring=cfg.scoring,
        config_echo=cfg.to_dict(),
    )
    logger.info("wrote %d scenes to %s", args.scenes, scenes_path)
    print(str(scenes_path))
    return 0


# ---------------------------------------------------------------------------
# select


def _select_one(task: Tuple[dict, str, dict]) -> dict:
    record, grid_path, pipe_kwargs = task
    scene = scene_from_record(record)
    grid = read_bevg(grid_path)
    pipeline = PipelineConfig(**pipe_kwargs)
    labels = run_scene_pipeline(
        scene.proposals, scene.known_gt, grid, pipeline, scene_id=scene.scene_id
    )
    return pseudo_set_to_record(labels)


def _cmd_select(args: argparse.Namespace) -> int:
    overrides = {
        "pipeline.k_o": args.ko,
        "pipeline.k_u": args.ku,
        "pipeline.gt_filter_iou": args.gt_filter_iou,
        "pipeline.reduction": args.reduction,
    }
    cfg = load_run_config(args.config, overrides)
    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)

    # Validate every grid reference up front so a bad scene cannot leave a
    # truncated output behind.
    tasks = []
    for scene in scenes:
        if scene.grid_path is None:
            raise InvalidInputError(f"scene {scene.scene_id!r} has no grid_path")
        grid_path = resolve_grid_path(scene, scenes_path)
        if not grid_path.is_file():
            raise InvalidInputError(
                f"scene {scene.scene_id!r}: grid file not found: {grid_path}"
            )
        tasks.append((scene_to_record(scene), str(grid_path), asdict(cfg.pipeline)))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_select_one, tasks))
    else:
        records = [_select_one(task) for task in tasks]
    records.sort(key=lambda r: r["scene_id"])

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _write_manifest(out_path, cfg.to_dict(), {"scenes": scenes_path})
    print(str(out_path))
    return 0


# ---------------------------------------------------------------------------
# eval


def _eval_inputs(scenes: Sequence[Scene], unknown_class_id: int) -> List[List[Box3D]]:
    """Ground truth per scene with unknown boxes relabelled to the eval id."""
    gts: List[List[Box3D]] = []
    for scene in scenes:
        gts.append(list(scene.known_gt) + relabel_unknown(scene.unknown_gt, unknown_class_id))
    return gts


def _cmd_eval(args: argparse.Namespace) -> int:
    overrides = {"eval.confidence_threshold": args.conf_threshold}
    cfg = load_run_config(args.config, overrides)
    ev: EvalConfig = cfg.eval
    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)
    scene_ids = [scene.scene_id for scene in scenes]
    gts_per_scene = _eval_inputs(scenes, ev.unknown_class_id)

    payload: dict = {"config_echo": cfg.to_dict()}
    inputs: Dict[str, Path] = {"scenes": scenes_path}

    if args.ko_sweep is not None:
        k_values = _parse_int_list(args.ko_sweep, "--ko-sweep")
        rows = ko_proportion_analysis(
            scenes,
            k_values,
            gt_filter_iou=cfg.pipeline.gt_filter_iou,
            match_distance=args.match_distance,
        )
        payload["ko_proportion"] = rows
        for row in rows:
            print(
                f"k_o={row['k_o']:4d}  matched={row['matched']:6d}  "
                f"total={row['total']:6d}  percent={row['percent']:.2f}"
            )
    else:
        if args.dets is None:
            raise ConfigError("eval requires --dets or --ko-sweep")
        dets_path = Path(args.dets)
        inputs["detections"] = dets_path
        dets_by_scene = load_detections(dets_path, unknown_class_id=ev.unknown_class_id)
        unmatched = set(dets_by_scene) - set(scene_ids)
        if unmatched:
            raise InvalidInputError(
                f"detections reference unknown scene ids: {sorted(unmatched)[:5]}"
            )
        dets_per_scene = [dets_by_scene.get(sid, []) for sid in scene_ids]
        if args.protocol == "distance":
            report = evaluate_distance_protocol(
                dets_per_scene,
                gts_per_scene,
                unknown_class_id=ev.unknown_class_id,
                thresholds=ev.distance_thresholds,
                n_points=ev.interpolation_points,
            )
        else:
            report = evaluate_iou_protocol(
                dets_per_scene,
                gts_per_scene,
                unknown_class_id=ev.unknown_class_id,
                class_thresholds=ev.iou_thresholds_per_class,
                default_known_threshold=ev.iou_threshold_known,
                unknown_threshold=ev.iou_threshold_unknown,
                confidence_threshold=ev.confidence_threshold,
                n_points=ev.interpolation_points,
            )
        report.config_echo = cfg.to_dict()
        payload["report"] = report.to_json_dict()
        _print_report(report)

    out_path = Path(args.out) if args.out else None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _write_manifest(out_path, cfg.to_dict(), inputs)
        print(str(out_path))
    return 0


def _fmt(value: Optional[float]) -> str:
    return "absent" if value is None else f"{value:.4f}"


def _print_report(report: EvalReport) -> None:
    print(f"protocol        {report.protocol}")
    print(f"mAP_known       {_fmt(report.map_known)}")
    print(f"AP_unknown      {_fmt(report.ap_unknown)}")
    print(f"AR_unknown      {_fmt(report.ar_unknown)}")
    if report.recall_unknown is not None:
        print(f"recall_unknown  {_fmt(report.recall_unknown)}")
    for cid, ap in sorted(report.per_class_ap.items()):
        print(f"AP[class {cid}]   {_fmt(ap)}")


# ---------------------------------------------------------------------------
# ablate


def _variant_plan(variant: str) -> Tuple[str, str]:
    """Map a variant name to (ranking key, grid reduction)."""
    if variant == "objectness":
        return "objectness", "mean"
    if variant == "novelty":
        return "novelty", "mean"
    if variant == "joint_mean":
        return "joint", "mean"
    if variant == "joint_pca":
        return "joint", "pca"
    raise ConfigError(f"unknown ablation variant {variant!r}")


def _ranking_confidence(label, key: str) -> float:
    if key == "objectness":
        return label.objectness
    if key == "novelty":
        return 1.0 - label.feature_response
    return label.joint


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    ev = cfg.eval
    scenes_path = Path(args.scenes)
    scenes = load_scenes(scenes_path)

    variants = (
        tuple(v.strip() for v in args.variants.split(",") if v.strip())
        if args.variants
        else _ABLATE_VARIANTS
    )
    for variant in variants:
        _variant_plan(variant)  # validate names before any work
    ku_values = (
        _parse_int_list(args.ku_sweep, "--ku-sweep")
        if args.ku_sweep
        else [cfg.pipeline.k_u]
    )
    for k_u in ku_values:
        if k_u < 1 or k_u > cfg.pipeline.k_o:
            raise ConfigError(f"--ku-sweep value {k_u} outside [1, k_o={cfg.pipeline.k_o}]")

    # Candidate lists and response maps do not depend on the variant key,
    # so compute them once per (scene, reduction).
    prepared = []
    for scene in scenes:
        if scene.grid_path is None:
            raise InvalidInputError(f"scene {scene.scene_id!r} has no grid_path")
        grid = read_bevg(resolve_grid_path(scene, scenes_path))
        survivors = gt_filter(scene.proposals, scene.known_gt, cfg.pipeline.gt_filter_iou)
        candidates = top_k_candidates(survivors, cfg.pipeline.k_o)
        scored = {
            reduction: score_candidates(candidates, reduce_grid(grid, reduction))
            for reduction in ("mean", "pca")
        }
        prepared.append((scene.scene_id, scored, list(scene.unknown_gt)))

    rows = []
    for variant in variants:
        key, reduction = _variant_plan(variant)
        for k_u in ku_values:
            pseudo_sets = []
            dets_per_scene = []
            unknown_per_scene = []
            for scene_id, scored, unknown_gt in prepared:
                labels = scored[reduction]
                ranked = sorted(
                    range(len(labels)),
                    key=lambda i: (-_ranking_confidence(labels[i], key), i),
                )[: min(k_u, len(labels))]
                picked = [labels[i] for i in ranked]
                # container invariant: entries ordered by joint score
                stored = sorted(picked, key=lambda lab: -lab.joint)
                pseudo_sets.append(PseudoLabelSet(entries=stored, scene_id=scene_id))
                dets_per_scene.append(
                    [
                        Detection(
                            box=label.box.with_class(ev.unknown_class_id),
                            class_id=ev.unknown_class_id,
                            confidence=_ranking_confidence(label, key),
                        )
                        for label in picked
                    ]
                )
                unknown_per_scene.append(unknown_gt)
            report = evaluate_distance_protocol(
                dets_per_scene,
                [relabel_unknown(g, ev.unknown_class_id) for g in unknown_per_scene],
                unknown_class_id=ev.unknown_class_id,
                thresholds=ev.distance_thresholds,
                n_points=ev.interpolation_points,
            )
            precision = selection_precision(
                pseudo_sets, unknown_per_scene, match_distance=args.match_distance
            )
            rows.append(
                {
                    "variant": variant,
                    "k_u": k_u,
                    "precision_at_ku": f"{precision:.6f}",
                    "ar_unknown": _fmt(report.ar_unknown),
                    "ap_unknown": _fmt(report.ap_unknown),
                }
            )

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["variant", "k_u", "precision_at_ku", "ar_unknown", "ap_unknown"]
        )
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out_path, cfg.to_dict(), {"scenes": scenes_path})
    for row in rows:
        print(
            f"{row['variant']:>12s}  k_u={row['k_u']:3d}  "
            f"precision={row['precision_at_ku']}  AR_unk={row['ar_unknown']}  "
            f"AP_unk={row['ap_unknown']}"
        )
    print(str(out_path))
    return 0


# ---------------------------------------------------------------------------
# match


def _cmd_match(args: argparse.Namespace) -> int:
    path = Path(args.costs)
    try:
        costs = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: cannot parse cost matrix: {exc}") from exc
    result = solve_assignment(costs)
    payload = {
        "assignment": {str(r): c for r, c in sorted(result.assignment.items())},
        "total_cost": result.total_cost,
        "per_pair_cost": result.per_pair_cost,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oslk", description="Open-set pseudo-label toolkit"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenes", type=int, default=16, help="number of scenes")
    p.add_argument("--seed", type=int, default=None, help="override sim.seed")
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("select", help="run pseudo-label selection")
    p.add_argument("--scenes", required=True, help="scene JSONL file")
    p.add_argument("--out", required=True, help="output pseudo-label JSONL")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--ko", type=int, default=None, help="override pipeline.k_o")
    p.add_argument("--ku", type=int, default=None, help="override pipeline.k_u")
    p.add_argument(
        "--gt-filter-iou", type=float, default=None, help="override pipeline.gt_filter_iou"
    )
    p.add_argument(
        "--reduction",
        choices=("mean", "pca"),
        default=None,
        help="override pipeline.reduction",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel scene workers")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--scenes", required=True, help="scene JSONL file")
    p.add_argument(
        "--dets", default=None, help="detections or pseudo-label JSONL to score"
    )
    p.add_argument(
        "--protocol", choices=("distance", "iou"), default="distance", help="match rule"
    )
    p.add_argument(
        "--ko-sweep",
        default=None,
        help="comma-separated k_o values for the candidate-proportion table",
    )
    p.add_argument(
        "--match-distance",
        type=float,
        default=2.0,
        help="center-distance threshold for the k_o sweep (meters)",
    )
    p.add_argument(
        "--conf-threshold",
        type=float,
        default=None,
        help="override eval.confidence_threshold",
    )
    p.add_argument("--out", default=None, help="write a JSON report here")
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="sweep ranking variants and budgets")
    p.add_argument("--scenes", required=True, help="scene JSONL file")
    p.add_argument("--out", required=True, help="output CSV table")
    p.add_argument(
        "--ku-sweep", default=None, help="comma-separated k_u values (default: config k_u)"
    )
    p.add_argument(
        "--variants",
        default=None,
        help="comma-separated subset of: " + ",".join(_ABLATE_VARIANTS),
    )
    p.add_argument(
        "--match-distance",
        type=float,
        default=2.0,
        help="center-distance threshold for selection precision (meters)",
    )
    p.add_argument("--config", default=None, help="JSON config file")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("match", help="solve an assignment from a cost-matrix CSV")
    p.add_argument("--costs", required=True, help="CSV cost matrix, rows <= columns")
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(func=_cmd_match)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InternalCheckError as exc:
        print(f"oslk: internal error: {exc}", file=sys.stderr)
        return 4
    except (InvalidInputError, InfeasibleError) as exc:
        print(f"oslk: {exc}", file=sys.stderr)
        return 2
    except OslkError as exc:
        print(f"oslk: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"oslk: i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
