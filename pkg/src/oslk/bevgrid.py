"""Bird's-eye-view feature grids and response pooling.

A BevGrid is a dense C x H x W feature volume with a metric calibration:
cell (0, 0) is centered at (origin_x, origin_y) and cells are square with
side `resolution` meters. Column index tracks +x, row index tracks +y.
Grids reduce to single-channel ResponseMaps in [0, 1]; a box's feature
response is the mean of bilinear samples on a meter-spaced lattice rotated
into the box frame.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import InvalidInputError
from .geometry import Box3D

BEVG_MAGIC = b"BEVG"

# On-disk sample precision; grids are held in float32 so that write/read
# round-trips are bit-exact.
GRID_DTYPE = np.float32


@dataclass(frozen=True)
class BevGrid:
    """C x H x W feature grid with metric calibration (see module docstring)."""

    data: np.ndarray
    origin_x: float
    origin_y: float
    resolution: float

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=GRID_DTYPE)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidInputError(
                f"grid data must be (C, H, W) with all dims >= 1, got shape {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("grid data must be finite")
        object.__setattr__(self, "data", data)
        for name in ("origin_x", "origin_y", "resolution"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.resolution <= 0.0:
            raise InvalidInputError(f"resolution must be positive, got {self.resolution!r}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ResponseMap:
    """H x W map of values in [0, 1], sharing the grid's calibration."""

    data: np.ndarray
    origin_x: float
    origin_y: float
    resolution: float

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or min(data.shape) < 1:
            raise InvalidInputError(
                f"response data must be (H, W) with both dims >= 1, got shape {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("response data must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise InvalidInputError("response values must lie in [0, 1]")
        object.__setattr__(self, "data", data)
        for name in ("origin_x", "origin_y", "resolution"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.resolution <= 0.0:
            raise InvalidInputError(f"resolution must be positive, got {self.resolution!r}")


def _minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Map to [0, 1]; constant input collapses to all zeros."""
    lo = float(values.min())
    hi = float(values.max())
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def reduce_mean(grid: BevGrid) -> ResponseMap:
    """Channel mean, min-max normalized to [0, 1]."""
    mean = grid.data.astype(np.float64).mean(axis=0)
    return ResponseMap(
        data=_minmax_normalize(mean),
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        resolution=grid.resolution,
    )


def reduce_pca(grid: BevGrid) -> ResponseMap:
    """Projection onto the first principal component across channels.

    Cells are the samples, channels the variables. The projection sign is
    fixed so that the cell with the largest channel mean projects
    non-negatively, which makes the single-channel case agree with
    reduce_mean. All-identical cells give an all-zeros map.
    """
    c, h, w = grid.data.shape
    if h * w < 2:
        raise InvalidInputError("PCA reduction needs at least two cells")
    samples = grid.data.astype(np.float64).reshape(c, h * w).T  # (cells, channels)
    centered = samples - samples.mean(axis=0)
    if not np.any(centered):
        return ResponseMap(
            data=np.zeros((h, w)),
            origin_x=grid.origin_x,
            origin_y=grid.origin_y,
            resolution=grid.resolution,
        )
    cov = centered.T @ centered / (h * w)
    eigvals, eigvecs = np.linalg.eigh(cov)
    principal = eigvecs[:, -1]
    projection = centered @ principal
    anchor = int(np.argmax(samples.mean(axis=1)))
    if projection[anchor] < 0.0:
        projection = -projection
    return ResponseMap(
        data=_minmax_normalize(projection.reshape(h, w)),
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        resolution=grid.resolution,
    )


def reduce_grid(grid: BevGrid, method: str) -> ResponseMap:
    """Dispatch to a named reduction: 'mean' or 'pca'."""
    if method == "mean":
        return reduce_mean(grid)
    if method == "pca":
        return reduce_pca(grid)
    raise InvalidInputError(f"unknown reduction {method!r}; expected 'mean' or 'pca'")


def _bilinear_sample(data: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at fractional cell coordinates, border-clamped."""
    h, w = data.shape
    fx = np.clip(fx, 0.0, float(w - 1))
    fy = np.clip(fy, 0.0, float(h - 1))
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = fx - x0
    ty = fy - y0
    top = (1.0 - tx) * data[y0, x0] + tx * data[y0, x1]
    bottom = (1.0 - tx) * data[y1, x0] + tx * data[y1, x1]
    return (1.0 - ty) * top + ty * bottom


def _centered_offsets(n: int) -> np.ndarray:
    """n integer offsets centered on zero: -floor(n/2) .. -floor(n/2)+n-1."""
    start = -(n // 2)
    return np.arange(start, start + n, dtype=np.float64)


def window_response(
    response: ResponseMap,
    box: Box3D,
    literal_form: bool = False,
    corner_anchor: bool = False,
) -> float:
    """Mean response over a meter-spaced lattice aligned with the box.

    The lattice has int(l) samples along the heading and int(w) across it
    (each floored to a minimum of 1), spaced one meter apart, centered on
    the box center, and rotated by the box yaw. Samples are bilinear with
    border clamping, so boxes outside the map read border values.

    corner_anchor anchors offsets at 1..n instead of centering them.
    literal_form reproduces a historical formulation (corner-anchored,
    with a degenerate pseudo-rotation that duplicates the cosine term and
    swaps the lattice dimensions); both exist for comparison runs only.
    """
    n_along = max(1, int(box.l))
    n_across = max(1, int(box.w))
    c = math.cos(box.r)
    s = math.sin(box.r)
    if literal_form:
        i = np.arange(1.0, n_across + 1.0)
        j = np.arange(1.0, n_along + 1.0)
        ii, jj = np.meshgrid(i, j, indexing="ij")
        dx = ii * c - jj * s
        dy = ii * c + jj * s
    else:
        if corner_anchor:
            along = np.arange(1.0, n_along + 1.0)
            across = np.arange(1.0, n_across + 1.0)
        else:
            along = _centered_offsets(n_along)
            across = _centered_offsets(n_across)
        aa, cc = np.meshgrid(along, across, indexing="ij")
        dx = aa * c - cc * s
        dy = aa * s + cc * c
    wx = box.x + dx
    wy = box.y + dy
    fx = (wx - response.origin_x) / response.resolution
    fy = (wy - response.origin_y) / response.resolution
    return float(np.mean(_bilinear_sample(response.data, fx, fy)))


def joint_score(objectness: float, feature_response: float) -> float:
    """objectness * (1 - feature_response): high means confident and novel."""
    if not (math.isfinite(objectness) and 0.0 <= objectness <= 1.0):
        raise InvalidInputError(f"objectness must lie in [0, 1], got {objectness!r}")
    if not (math.isfinite(feature_response) and 0.0 <= feature_response <= 1.0):
        raise InvalidInputError(
            f"feature_response must lie in [0, 1], got {feature_response!r}"
        )
    return objectness * (1.0 - feature_response)


def write_bevg(grid: BevGrid, path) -> None:
    """Write the binary grid format (see read_bevg)."""
    with open(path, "wb") as fh:
        _write_bevg_stream(grid, fh)


def _write_bevg_stream(grid: BevGrid, fh: BinaryIO) -> None:
    c, h, w = grid.data.shape
    fh.write(BEVG_MAGIC)
    fh.write(struct.pack("<III", c, h, w))
    fh.write(struct.pack("<ddd", grid.origin_x, grid.origin_y, grid.resolution))
    fh.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())


def read_bevg(path) -> BevGrid:
    """Read the binary grid format.

    Layout, all little-endian: magic "BEVG"; u32 C, H, W; f64 origin_x,
    origin_y, resolution; C*H*W f32 samples, channel-major then row-major.
    Round-trips are bit-exact because grids are held in float32.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.calcsize("<III") + struct.calcsize("<ddd")
    if len(blob) < len(BEVG_MAGIC) + header:
        raise InvalidInputError(f"truncated grid file: {path}")
    if blob[:4] != BEVG_MAGIC:
        raise InvalidInputError(f"bad magic in grid file {path}: {blob[:4]!r}")
    c, h, w = struct.unpack_from("<III", blob, 4)
    origin_x, origin_y, resolution = struct.unpack_from("<ddd", blob, 16)
    expected = 40 + 4 * c * h * w
    if len(blob) != expected:
        raise InvalidInputError(
            f"grid file {path} has {len(blob)} bytes, expected {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=40).reshape(c, h, w)
    return BevGrid(
        data=data.copy(), origin_x=origin_x, origin_y=origin_y, resolution=resolution
    )
