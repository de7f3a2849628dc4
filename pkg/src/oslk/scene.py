"""Scene records and their JSON Lines serialization.

One scene per line: known ground truth (integer classes), unknown ground
truth (class literal "unknown"), proposals with objectness, and a path to
the scene's BEV grid, relative to the scene file's directory. JSON floats
round-trip exactly, so saving and reloading preserves values bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .bevgrid import BevGrid, read_bevg
from .errors import InvalidInputError
from .geometry import Box3D
from .selection import Proposal

UNKNOWN_CLASS_LITERAL = "unknown"

_BOX_KEYS = ("x", "y", "z", "w", "l", "h", "r")


@dataclass
class Scene:
    """All per-scene inputs to selection and evaluation."""

    scene_id: str
    known_gt: List[Box3D]
    unknown_gt: List[Box3D]
    proposals: List[Proposal]
    grid_path: Optional[str] = None
    # Set when object placement gave up before reaching the requested count;
    # informational only, never serialized.
    placement_truncated: bool = field(default=False, compare=False)


def _box_fields(box: Box3D) -> dict:
    return {k: getattr(box, k) for k in _BOX_KEYS}


def _require_number(record: dict, key: str, where: str) -> float:
    if key not in record:
        raise InvalidInputError(f"{where}: missing key {key!r}")
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInputError(f"{where}: key {key!r} must be a number, got {value!r}")
    return float(value)


def _box_from_record(record: dict, where: str, class_id: Optional[int]) -> Box3D:
    values = {k: _require_number(record, k, where) for k in _BOX_KEYS}
    return Box3D(class_id=class_id, **values)


def scene_to_record(scene: Scene) -> dict:
    """Plain-JSON form of a scene (the on-disk line format)."""
    known = []
    for box in scene.known_gt:
        if box.class_id is None:
            raise InvalidInputError(f"scene {scene.scene_id}: known boxes need class_id")
        known.append({**_box_fields(box), "class": box.class_id})
    unknown = [{**_box_fields(box), "class": UNKNOWN_CLASS_LITERAL} for box in scene.unknown_gt]
    proposals = [{**_box_fields(p.box), "s_obj": p.objectness} for p in scene.proposals]
    return {
        "scene_id": scene.scene_id,
        "known_gt": known,
        "unknown_gt": unknown,
        "proposals": proposals,
        "grid_path": scene.grid_path,
    }


def scene_from_record(record: dict) -> Scene:
    """Parse one scene record, validating shape and required keys."""
    if not isinstance(record, dict):
        raise InvalidInputError(f"scene record must be an object, got {type(record).__name__}")
    for key in ("scene_id", "known_gt", "unknown_gt", "proposals"):
        if key not in record:
            raise InvalidInputError(f"scene record missing key {key!r}")
    scene_id = record["scene_id"]
    if not isinstance(scene_id, str) or not scene_id:
        raise InvalidInputError(f"scene_id must be a non-empty string, got {scene_id!r}")
    where = f"scene {scene_id}"

    known = []
    for entry in record["known_gt"]:
        cls = entry.get("class")
        if isinstance(cls, bool) or not isinstance(cls, int):
            raise InvalidInputError(f"{where}: known class must be an integer, got {cls!r}")
        known.append(_box_from_record(entry, f"{where} known_gt", cls))

    unknown = []
    for entry in record["unknown_gt"]:
        if entry.get("class") != UNKNOWN_CLASS_LITERAL:
            raise InvalidInputError(
                f"{where}: unknown_gt class must be {UNKNOWN_CLASS_LITERAL!r}, "
                f"got {entry.get('class')!r}"
            )
        unknown.append(_box_from_record(entry, f"{where} unknown_gt", None))

    proposals = []
    for entry in record["proposals"]:
        box = _box_from_record(entry, f"{where} proposals", None)
        proposals.append(Proposal(box=box, objectness=_require_number(entry, "s_obj", where)))

    grid_path = record.get("grid_path")
    if grid_path is not None and not isinstance(grid_path, str):
        raise InvalidInputError(f"{where}: grid_path must be a string or null")
    return Scene(
        scene_id=scene_id,
        known_gt=known,
        unknown_gt=unknown,
        proposals=proposals,
        grid_path=grid_path,
    )


def save_scenes(scenes: List[Scene], path) -> None:
    """Write scenes as JSON Lines, one record per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene), sort_keys=True))
            fh.write("\n")


def load_scenes(path) -> List[Scene]:
    """Read a JSON Lines scene file; blank lines are ignored."""
    path = Path(path)
    scenes = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            scenes.append(scene_from_record(record))
    return scenes


def resolve_grid_path(scene: Scene, scenes_path) -> Path:
    """Absolute path of the scene's grid, relative to the scene file."""
    if scene.grid_path is None:
        raise InvalidInputError(f"scene {scene.scene_id} has no grid_path")
    return Path(scenes_path).parent / scene.grid_path


def load_scene_grid(scene: Scene, scenes_path) -> BevGrid:
    """Load the BEV grid referenced by a scene."""
    return read_bevg(resolve_grid_path(scene, scenes_path))
