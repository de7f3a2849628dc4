"""Oriented 3D box primitives: yaw algebra, scale matrices, footprints, IoU.

Convention: yaw r is measured counterclockwise from the +x axis about +z;
l is the extent along the heading direction (+x at r = 0), w the extent
across it, h the vertical extent. Boxes are upright (no roll or pitch) and
z is the center of the vertical extent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi

# Intersections smaller than this are treated as empty; degenerate contact
# (shared edges, corner touches) otherwise produces noise-level areas.
AREA_EPS = 1e-12

_FIELDS = ("x", "y", "z", "w", "l", "h", "r")


def normalize_yaw(r: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    if not math.isfinite(r):
        raise InvalidInputError(f"yaw must be finite, got {r!r}")
    return r - TWO_PI * math.floor((r + math.pi) / TWO_PI)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D bounding box: center (x, y, z), extents (w, l, h), yaw r.

    Yaw is stored normalized to [-pi, pi). Extents must be strictly
    positive; all fields must be finite. class_id is an optional integer
    category tag and never participates in geometry.
    """

    x: float
    y: float
    z: float
    w: float
    l: float
    h: float
    r: float
    class_id: Optional[int] = None

    def __post_init__(self) -> None:
        for name in _FIELDS:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"Box3D.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.w <= 0.0 or self.l <= 0.0 or self.h <= 0.0:
            raise InvalidInputError(
                f"Box3D extents must be positive, got w={self.w}, l={self.l}, h={self.h}"
            )
        object.__setattr__(self, "r", normalize_yaw(self.r))
        if self.class_id is not None:
            object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def volume(self) -> float:
        return self.w * self.l * self.h

    @property
    def bev_area(self) -> float:
        return self.w * self.l

    def to_array(self) -> np.ndarray:
        """Fields (x, y, z, w, l, h, r) as a float vector."""
        return np.array([self.x, self.y, self.z, self.w, self.l, self.h, self.r])

    def with_class(self, class_id: Optional[int]) -> "Box3D":
        """Copy of this box with a different class id."""
        return Box3D(self.x, self.y, self.z, self.w, self.l, self.h, self.r, class_id)


def boxes_to_array(boxes: Sequence[Box3D]) -> np.ndarray:
    """Stack boxes into an (n, 7) array of (x, y, z, w, l, h, r)."""
    if len(boxes) == 0:
        return np.zeros((0, 7))
    return np.stack([b.to_array() for b in boxes])


def yaw_rotation_matrix(r: float) -> np.ndarray:
    """3x3 rotation about +z by yaw r (determinant 1, orthonormal)."""
    if not math.isfinite(r):
        raise InvalidInputError(f"yaw must be finite, got {r!r}")
    c = math.cos(r)
    s = math.sin(r)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def scale_matrix(box: Box3D) -> np.ndarray:
    """3x3 scale matrix with rows (rotated length, rotated width, height).

    Rows are the yaw-rotated length vector (l along heading), the
    yaw-rotated width vector (w across heading), and the vertical extent
    vector (0, 0, h); row norms are therefore l, w, h.
    """
    rot = yaw_rotation_matrix(box.r)
    length_row = rot @ np.array([box.l, 0.0, 0.0])
    width_row = rot @ np.array([0.0, box.w, 0.0])
    height_row = np.array([0.0, 0.0, box.h])
    return np.stack([length_row, width_row, height_row])


def bev_corners(box: Box3D) -> np.ndarray:
    """Four BEV footprint corners, counterclockwise, as a (4, 2) array.

    Local corners are (+-l/2, +-w/2) in the heading frame, rotated by the
    yaw and translated to the box center.
    """
    hl = 0.5 * box.l
    hw = 0.5 * box.w
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c = math.cos(box.r)
    s = math.sin(box.r)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([box.x, box.y])


def rigid_transform(box: Box3D, yaw: float, dx: float, dy: float) -> Box3D:
    """Rotate the box about the origin by yaw, then translate by (dx, dy)."""
    c = math.cos(yaw)
    s = math.sin(yaw)
    return Box3D(
        x=c * box.x - s * box.y + dx,
        y=s * box.x + c * box.y + dy,
        z=box.z,
        w=box.w,
        l=box.l,
        h=box.h,
        r=box.r + yaw,
        class_id=box.class_id,
    )


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    """Footprint intersection area; values below AREA_EPS collapse to 0."""
    area = _kernels.rect_intersection_area(bev_corners(a), bev_corners(b))
    return area if area >= AREA_EPS else 0.0


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Rotated footprint IoU in the ground plane."""
    inter = bev_intersection_area(a, b)
    union = a.bev_area + b.bev_area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def _z_overlap(a: Box3D, b: Box3D) -> float:
    lo = max(a.z - 0.5 * a.h, b.z - 0.5 * b.h)
    hi = min(a.z + 0.5 * a.h, b.z + 0.5 * b.h)
    return max(0.0, hi - lo)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU of two oriented boxes.

    Footprint overlap from exact convex polygon clipping, vertical overlap
    from the z interval; identical boxes give 1, disjoint boxes give 0.
    """
    inter_volume = bev_intersection_area(a, b) * _z_overlap(a, b)
    union = a.volume + b.volume - inter_volume
    if union <= 0.0:
        return 0.0
    return min(max(inter_volume / union, 0.0), 1.0)


def pairwise_bev_iou(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    """Footprint IoU for every pair, as an (n, m) array."""
    n, m = len(boxes_a), len(boxes_b)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    corners_a = np.stack([bev_corners(b) for b in boxes_a])
    corners_b = np.stack([bev_corners(b) for b in boxes_b])
    inter = _kernels.pairwise_rect_intersection_area(corners_a, corners_b)
    inter[inter < AREA_EPS] = 0.0
    area_a = np.array([b.bev_area for b in boxes_a])
    area_b = np.array([b.bev_area for b in boxes_b])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return np.clip(out, 0.0, 1.0)


def pairwise_iou3d(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    """Volume IoU for every pair, as an (n, m) array."""
    n, m = len(boxes_a), len(boxes_b)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    corners_a = np.stack([bev_corners(b) for b in boxes_a])
    corners_b = np.stack([bev_corners(b) for b in boxes_b])
    inter_area = _kernels.pairwise_rect_intersection_area(corners_a, corners_b)
    inter_area[inter_area < AREA_EPS] = 0.0
    za = np.array([[b.z - 0.5 * b.h, b.z + 0.5 * b.h] for b in boxes_a])
    zb = np.array([[b.z - 0.5 * b.h, b.z + 0.5 * b.h] for b in boxes_b])
    z_lo = np.maximum(za[:, None, 0], zb[None, :, 0])
    z_hi = np.minimum(za[:, None, 1], zb[None, :, 1])
    inter_volume = inter_area * np.maximum(0.0, z_hi - z_lo)
    vol_a = np.array([b.volume for b in boxes_a])
    vol_b = np.array([b.volume for b in boxes_b])
    union = vol_a[:, None] + vol_b[None, :] - inter_volume
    out = np.zeros_like(inter_volume)
    np.divide(inter_volume, union, out=out, where=union > 0.0)
    return np.clip(out, 0.0, 1.0)
