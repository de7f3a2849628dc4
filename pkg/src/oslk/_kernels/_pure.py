"""Pure NumPy/Python fallback for the hot kernels.

Mirrors oslk._kernels._core exactly: same algorithms, same operation order,
same tie handling, so both backends produce identical results.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "rect_intersection_area",
    "pairwise_rect_intersection_area",
    "lap_solve",
]


def rect_intersection_area(corners_a, corners_b) -> float:
    """Intersection area of two convex polygons (counterclockwise vertices).

    Sutherland-Hodgman clipping of polygon A against each edge of polygon B.
    """
    poly = [(float(p[0]), float(p[1])) for p in corners_a]
    clip = [(float(p[0]), float(p[1])) for p in corners_b]
    n_clip = len(clip)
    for k in range(n_clip):
        if not poly:
            return 0.0
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % n_clip]
        ex = bx - ax
        ey = by - ay
        out: list[tuple[float, float]] = []
        px, py = poly[-1]
        prev_side = ex * (py - ay) - ey * (px - ax)
        prev_in = prev_side >= 0.0
        for cx, cy in poly:
            cur_side = ex * (cy - ay) - ey * (cx - ax)
            cur_in = cur_side >= 0.0
            if cur_in != prev_in:
                t = prev_side / (prev_side - cur_side)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            if cur_in:
                out.append((cx, cy))
            px, py, prev_side, prev_in = cx, cy, cur_side, cur_in
        poly = out
    if len(poly) < 3:
        return 0.0
    area = 0.0
    px, py = poly[-1]
    for cx, cy in poly:
        area += px * cy - cx * py
        px, py = cx, cy
    return 0.5 * abs(area)


def pairwise_rect_intersection_area(corners_a, corners_b) -> np.ndarray:
    """Intersection areas for every pair in (n,4,2) x (m,4,2) corner stacks."""
    A = np.ascontiguousarray(corners_a, dtype=np.float64)
    B = np.ascontiguousarray(corners_b, dtype=np.float64)
    n, m = A.shape[0], B.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    a_min = A.min(axis=1)
    a_max = A.max(axis=1)
    b_min = B.min(axis=1)
    b_max = B.max(axis=1)
    for i in range(n):
        for j in range(m):
            # axis-aligned reject: disjoint bounding boxes cannot intersect
            if (
                a_min[i, 0] > b_max[j, 0]
                or b_min[j, 0] > a_max[i, 0]
                or a_min[i, 1] > b_max[j, 1]
                or b_min[j, 1] > a_max[i, 1]
            ):
                continue
            out[i, j] = rect_intersection_area(A[i], B[j])
    return out


def lap_solve(cost) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-cost assignment of rows to columns (rows <= columns).

    Shortest augmenting path formulation with row/column potentials.
    Returns (row_to_col, u, v) where u, v are the dual potentials; the
    reduced cost cost[i, j] - u[i] - v[j] is ~0 on edges that can appear
    in an optimal assignment. Ties inside the search resolve toward the
    lowest column index, identically in both backends.
    """
    c = np.ascontiguousarray(cost, dtype=np.float64)
    n_rows, n_cols = c.shape
    u = np.zeros(n_rows, dtype=np.float64)
    v = np.zeros(n_cols + 1, dtype=np.float64)  # slot n_cols: virtual start column
    col_row = np.full(n_cols + 1, -1, dtype=np.int64)
    for row in range(n_rows):
        col_row[n_cols] = row
        j0 = n_cols
        min_to = np.full(n_cols, np.inf, dtype=np.float64)
        parent = np.full(n_cols, -1, dtype=np.int64)
        used = np.zeros(n_cols + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            free = np.flatnonzero(~used[:n_cols])
            reduced = c[i0, free] - u[i0] - v[free]
            improves = reduced < min_to[free]
            hit = free[improves]
            min_to[hit] = reduced[improves]
            parent[hit] = j0
            j1 = int(free[int(np.argmin(min_to[free]))])
            delta = float(min_to[j1])
            used_cols = np.flatnonzero(used)
            u[col_row[used_cols]] += delta
            v[used_cols] -= delta
            min_to[free] -= delta
            j0 = j1
            if col_row[j0] == -1:
                break
        while j0 != n_cols:
            j1 = int(parent[j0])
            col_row[j0] = col_row[j1]
            j0 = j1
    row_to_col = np.full(n_rows, -1, dtype=np.int64)
    for col in range(n_cols):
        if col_row[col] >= 0:
            row_to_col[col_row[col]] = col
    return row_to_col, u, v[:n_cols].copy()
