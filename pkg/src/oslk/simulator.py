"""Deterministic synthetic scenes for exercising the selection pipeline.

Each scene holds non-overlapping known and unknown ground-truth boxes,
proposals derived from the ground truth by calibrated noise (the proposal
objectness is the true geometric score against its source box), clutter
proposals with low-range scores, and a BEV grid whose reduced response
carries Gaussian bumps at known objects only (optionally faint ones at
unknowns). Everything is a pure function of (seed, scene_index): scene i
is bit-identical across runs and independent of how many scenes are drawn.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .bevgrid import BevGrid, write_bevg
from .errors import InvalidInputError
from .geometry import Box3D, bev_intersection_area
from .objectness import ScoringConfig, objectness_score
from .scene import Scene, save_scenes
from .selection import Proposal

# (length, width, height); length runs along the heading.
KNOWN_SIZE_PRIORS = {
    0: (4.5, 1.9, 1.7),  # car-like
    1: (0.8, 0.8, 1.8),  # pedestrian-like
}
UNKNOWN_SIZE_PRIOR = (8.0, 2.5, 3.0)  # truck-like

_SIZE_JITTER = 0.05  # lognormal sigma applied to the size priors
_PLACEMENT_RETRIES = 50
_PLACEMENT_CLEARANCE = 0.5  # meters added to footprints during placement
_MIN_EXTENT = 0.05  # proposals never shrink below this under noise

MANIFEST_NAME = "manifest.json"
SCENES_NAME = "scenes.jsonl"
GRIDS_DIR = "grids"


@dataclass(frozen=True)
class SimConfig:
    """Knobs for scene synthesis; defaults are sized for top-k analyses."""

    seed: int = 0
    n_known: int = 4
    n_unknown: int = 3
    area: float = 40.0
    noise_center_sigma: float = 0.1
    noise_scale_sigma: float = 0.02
    noise_yaw_sigma: float = 0.005
    score_noise_sigma: float = 0.0
    miss_rate: float = 0.0
    clutter_rate: float = 50.0
    clutter_placement: str = "uniform"
    clutter_ring: Tuple[float, float] = (3.0, 5.0)
    clutter_score_range: Tuple[float, float] = (0.05, 0.5)
    bump_amplitude: float = 1.0
    unknown_bump_amplitude: float = 0.0
    bump_sigma: float = 3.0
    grid_resolution: float = 0.5
    grid_channels: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidInputError(f"seed must be a non-negative integer, got {self.seed!r}")
        for name in ("n_known", "n_unknown", "grid_channels"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise InvalidInputError(f"{name} must be a non-negative integer, got {value!r}")
        if self.grid_channels < 1:
            raise InvalidInputError(f"grid_channels must be >= 1, got {self.grid_channels!r}")
        for name in (
            "noise_center_sigma",
            "noise_scale_sigma",
            "noise_yaw_sigma",
            "score_noise_sigma",
            "clutter_rate",
        ):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value >= 0.0):
                raise InvalidInputError(f"{name} must be >= 0, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("area", "bump_sigma", "grid_resolution"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidInputError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("miss_rate", "bump_amplitude", "unknown_bump_amplitude"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, value)
        if self.clutter_placement not in ("uniform", "ring_known"):
            raise InvalidInputError(
                f"clutter_placement must be 'uniform' or 'ring_known', got {self.clutter_placement!r}"
            )
        ring = tuple(float(v) for v in self.clutter_ring)
        score_range = tuple(float(v) for v in self.clutter_score_range)
        if len(ring) != 2 or not (0.0 < ring[0] <= ring[1]) or not math.isfinite(ring[1]):
            raise InvalidInputError(f"clutter_ring must be 0 < lo <= hi, got {ring!r}")
        if (
            len(score_range) != 2
            or not (0.0 <= score_range[0] <= score_range[1] <= 1.0)
        ):
            raise InvalidInputError(
                f"clutter_score_range must satisfy 0 <= lo <= hi <= 1, got {score_range!r}"
            )
        object.__setattr__(self, "clutter_ring", ring)
        object.__setattr__(self, "clutter_score_range", score_range)


def _scene_rng(seed: int, scene_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, scene_index)))


def _footprints_clear(candidate: Box3D, placed: List[Box3D]) -> bool:
    """True when the candidate keeps clearance from every placed box."""
    grown = Box3D(
        x=candidate.x,
        y=candidate.y,
        z=candidate.z,
        w=candidate.w + _PLACEMENT_CLEARANCE,
        l=candidate.l + _PLACEMENT_CLEARANCE,
        h=candidate.h,
        r=candidate.r,
    )
    for other in placed:
        grown_other = Box3D(
            x=other.x,
            y=other.y,
            z=other.z,
            w=other.w + _PLACEMENT_CLEARANCE,
            l=other.l + _PLACEMENT_CLEARANCE,
            h=other.h,
            r=other.r,
        )
        if bev_intersection_area(grown, grown_other) > 0.0:
            return False
    return True


def _place_box(
    rng: np.random.Generator,
    cfg: SimConfig,
    placed: List[Box3D],
    size_prior: Tuple[float, float, float],
    class_id: Optional[int],
) -> Optional[Box3D]:
    length, width, height = size_prior
    for _ in range(_PLACEMENT_RETRIES):
        jitter = np.exp(rng.normal(0.0, _SIZE_JITTER, size=3))
        l = length * float(jitter[0])
        w = width * float(jitter[1])
        h = height * float(jitter[2])
        x = float(rng.uniform(-cfg.area, cfg.area))
        y = float(rng.uniform(-cfg.area, cfg.area))
        r = float(rng.uniform(-math.pi, math.pi))
        candidate = Box3D(x=x, y=y, z=h / 2.0, w=w, l=l, h=h, r=r, class_id=class_id)
        if _footprints_clear(candidate, placed):
            return candidate
    return None


def _perturb_box(rng: np.random.Generator, cfg: SimConfig, gt: Box3D) -> Box3D:
    center_noise = rng.normal(0.0, cfg.noise_center_sigma, size=3)
    size_noise = rng.normal(0.0, cfg.noise_scale_sigma, size=3)
    yaw_noise = float(rng.normal(0.0, cfg.noise_yaw_sigma))
    return Box3D(
        x=gt.x + float(center_noise[0]),
        y=gt.y + float(center_noise[1]),
        z=gt.z + float(center_noise[2]),
        w=max(_MIN_EXTENT, gt.w + float(size_noise[0])),
        l=max(_MIN_EXTENT, gt.l + float(size_noise[1])),
        h=max(_MIN_EXTENT, gt.h + float(size_noise[2])),
        r=gt.r + yaw_noise,
    )


def _clutter_box(
    rng: np.random.Generator, cfg: SimConfig, known: List[Box3D]
) -> Box3D:
    l = float(rng.uniform(1.5, 6.0))
    w = float(rng.uniform(1.0, 2.5))
    h = float(rng.uniform(1.0, 2.5))
    r = float(rng.uniform(-math.pi, math.pi))
    if cfg.clutter_placement == "ring_known" and known:
        anchor = known[int(rng.integers(0, len(known)))]
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        radius = float(rng.uniform(cfg.clutter_ring[0], cfg.clutter_ring[1]))
        x = anchor.x + radius * math.cos(angle)
        y = anchor.y + radius * math.sin(angle)
    else:
        x = float(rng.uniform(-cfg.area, cfg.area))
        y = float(rng.uniform(-cfg.area, cfg.area))
    return Box3D(x=x, y=y, z=h / 2.0, w=w, l=l, h=h, r=r)


def _build_grid(
    rng: np.random.Generator, cfg: SimConfig, known: List[Box3D], unknown: List[Box3D]
) -> BevGrid:
    span = cfg.area + 3.0 * cfg.bump_sigma + 2.0
    n_cells = int(math.ceil(2.0 * span / cfg.grid_resolution)) + 1
    origin = -span
    coords = origin + cfg.grid_resolution * np.arange(n_cells)
    xs, ys = np.meshgrid(coords, coords, indexing="xy")
    bump = np.zeros((n_cells, n_cells))
    two_sigma_sq = 2.0 * cfg.bump_sigma * cfg.bump_sigma
    for box, amplitude in [(b, cfg.bump_amplitude) for b in known] + [
        (b, cfg.unknown_bump_amplitude) for b in unknown
    ]:
        if amplitude <= 0.0:
            continue
        d_sq = (xs - box.x) ** 2 + (ys - box.y) ** 2
        np.maximum(bump, amplitude * np.exp(-d_sq / two_sigma_sq), out=bump)
    if cfg.grid_channels == 1:
        data = bump[None, :, :]
    else:
        weights = rng.uniform(0.5, 1.5, size=cfg.grid_channels)
        data = weights[:, None, None] * bump[None, :, :]
    return BevGrid(
        data=data.astype(np.float32),
        origin_x=origin,
        origin_y=origin,
        resolution=cfg.grid_resolution,
    )


def scene_name(scene_index: int) -> str:
    return f"scene_{scene_index:05d}"


def generate_scene(
    cfg: SimConfig, scene_index: int, scoring: ScoringConfig | None = None
) -> Tuple[Scene, BevGrid]:
    """Synthesize one scene and its grid, deterministically.

    The result depends only on (cfg, scene_index); the per-scene stream is
    seeded from (cfg.seed, scene_index), so scenes are independent of each
    other and of how many are generated.
    """
    if scene_index < 0:
        raise InvalidInputError(f"scene_index must be >= 0, got {scene_index!r}")
    scoring = scoring or ScoringConfig()
    rng = _scene_rng(cfg.seed, scene_index)

    placed: List[Box3D] = []
    truncated = False
    known: List[Box3D] = []
    for _ in range(cfg.n_known):
        class_id = int(rng.integers(0, len(KNOWN_SIZE_PRIORS)))
        box = _place_box(rng, cfg, placed, KNOWN_SIZE_PRIORS[class_id], class_id)
        if box is None:
            truncated = True
            continue
        placed.append(box)
        known.append(box)
    unknown: List[Box3D] = []
    for _ in range(cfg.n_unknown):
        box = _place_box(rng, cfg, placed, UNKNOWN_SIZE_PRIOR, None)
        if box is None:
            truncated = True
            continue
        placed.append(box)
        unknown.append(box)

    proposals: List[Proposal] = []
    for gt in known + unknown:
        missed = rng.uniform() < cfg.miss_rate
        noisy = _perturb_box(rng, cfg, gt)
        score = objectness_score(gt, noisy, scoring).s_obj
        if cfg.score_noise_sigma > 0.0:
            score = float(np.clip(score + rng.normal(0.0, cfg.score_noise_sigma), 0.0, 1.0))
        if missed:
            continue
        proposals.append(Proposal(box=noisy, objectness=score))
    n_clutter = int(rng.poisson(cfg.clutter_rate))
    lo, hi = cfg.clutter_score_range
    for _ in range(n_clutter):
        box = _clutter_box(rng, cfg, known)
        proposals.append(Proposal(box=box, objectness=float(rng.uniform(lo, hi))))
    if proposals:
        order = rng.permutation(len(proposals))
        proposals = [proposals[int(i)] for i in order]

    grid = _build_grid(rng, cfg, known, unknown)
    scene = Scene(
        scene_id=scene_name(scene_index),
        known_gt=known,
        unknown_gt=unknown,
        proposals=proposals,
        grid_path=None,
        placement_truncated=truncated,
    )
    return scene, grid


def _sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def generate_benchmark(
    cfg: SimConfig,
    n_scenes: int,
    out_dir,
    scoring: ScoringConfig | None = None,
    config_echo: dict | None = None,
) -> Path:
    """Write a full benchmark: scenes.jsonl, grids/, and a manifest.

    The manifest echoes the configuration and records a sha256 checksum of
    every written file; with a fixed seed the whole tree is bit-stable.
    Returns the path of the scene file.
    """
    if n_scenes < 1:
        raise InvalidInputError(f"n_scenes must be >= 1, got {n_scenes!r}")
    out = Path(out_dir)
    (out / GRIDS_DIR).mkdir(parents=True, exist_ok=True)

    scenes: List[Scene] = []
    grid_files: List[Path] = []
    for index in range(n_scenes):
        scene, grid = generate_scene(cfg, index, scoring=scoring)
        rel = f"{GRIDS_DIR}/{scene.scene_id}.bevg"
        write_bevg(grid, out / rel)
        scene.grid_path = rel
        scenes.append(scene)
        grid_files.append(out / rel)

    scenes_path = out / SCENES_NAME
    save_scenes(scenes, scenes_path)

    files = {SCENES_NAME: _sha256_of(scenes_path)}
    for path in grid_files:
        files[f"{GRIDS_DIR}/{path.name}"] = _sha256_of(path)
    manifest = {
        "format_version": 1,
        "n_scenes": n_scenes,
        "config": asdict(cfg),
        "scoring": asdict(scoring or ScoringConfig()),
        "files": files,
    }
    if config_echo is not None:
        manifest["config_echo"] = config_echo
    with (out / MANIFEST_NAME).open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return scenes_path
