# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: convex clipping and assignment.

Keep in lockstep with oslk._kernels._pure: same algorithms, same operation
order, same tie handling, so both backends produce identical results.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

__all__ = [
    "rect_intersection_area",
    "pairwise_rect_intersection_area",
    "lap_solve",
]

cdef double _clip_area(const double* pa, const double* pb) noexcept nogil:
    """Sutherland-Hodgman intersection area of two CCW quads (flat xy pairs).

    A 4-gon clipped by a 4-gon has at most 8 vertices; 16 leaves headroom.
    """
    cdef double poly_x[16]
    cdef double poly_y[16]
    cdef double out_x[16]
    cdef double out_y[16]
    cdef int n_poly = 4
    cdef int n_out, k, i
    cdef double ax, ay, bx, by, ex, ey
    cdef double px, py, cx, cy, prev_side, cur_side, t, area
    cdef bint prev_in, cur_in

    for i in range(4):
        poly_x[i] = pa[2 * i]
        poly_y[i] = pa[2 * i + 1]

    for k in range(4):
        if n_poly == 0:
            return 0.0
        ax = pb[2 * k]
        ay = pb[2 * k + 1]
        bx = pb[2 * ((k + 1) % 4)]
        by = pb[2 * ((k + 1) % 4) + 1]
        ex = bx - ax
        ey = by - ay
        n_out = 0
        px = poly_x[n_poly - 1]
        py = poly_y[n_poly - 1]
        prev_side = ex * (py - ay) - ey * (px - ax)
        prev_in = prev_side >= 0.0
        for i in range(n_poly):
            cx = poly_x[i]
            cy = poly_y[i]
            cur_side = ex * (cy - ay) - ey * (cx - ax)
            cur_in = cur_side >= 0.0
            if cur_in != prev_in:
                t = prev_side / (prev_side - cur_side)
                out_x[n_out] = px + t * (cx - px)
                out_y[n_out] = py + t * (cy - py)
                n_out += 1
            if cur_in:
                out_x[n_out] = cx
                out_y[n_out] = cy
                n_out += 1
            px = cx
            py = cy
            prev_side = cur_side
            prev_in = cur_in
        n_poly = n_out
        for i in range(n_poly):
            poly_x[i] = out_x[i]
            poly_y[i] = out_y[i]

    if n_poly < 3:
        return 0.0
    area = 0.0
    px = poly_x[n_poly - 1]
    py = poly_y[n_poly - 1]
    for i in range(n_poly):
        cx = poly_x[i]
        cy = poly_y[i]
        area += px * cy - cx * py
        px = cx
        py = cy
    if area < 0.0:
        area = -area
    return 0.5 * area


def rect_intersection_area(corners_a, corners_b):
    """Intersection area of two convex quads (counterclockwise vertices)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a = np.ascontiguousarray(
        corners_a, dtype=np.float64
    )
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = np.ascontiguousarray(
        corners_b, dtype=np.float64
    )
    return _clip_area(<const double*> a.data, <const double*> b.data)


def pairwise_rect_intersection_area(corners_a, corners_b):
    """Intersection areas for every pair in (n,4,2) x (m,4,2) corner stacks."""
    A = np.ascontiguousarray(corners_a, dtype=np.float64)
    B = np.ascontiguousarray(corners_b, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t m = B.shape[0]
    out_arr = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out_arr
    a_min = A.min(axis=1)
    a_max = A.max(axis=1)
    b_min = B.min(axis=1)
    b_max = B.max(axis=1)

    cdef const double[:, :, ::1] av = A
    cdef const double[:, :, ::1] bv = B
    cdef const double[:, ::1] amin = a_min
    cdef const double[:, ::1] amax = a_max
    cdef const double[:, ::1] bmin = b_min
    cdef const double[:, ::1] bmax = b_max
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                if (
                    amin[i, 0] > bmax[j, 0]
                    or bmin[j, 0] > amax[i, 0]
                    or amin[i, 1] > bmax[j, 1]
                    or bmin[j, 1] > amax[i, 1]
                ):
                    continue
                out[i, j] = _clip_area(&av[i, 0, 0], &bv[j, 0, 0])
    return out_arr


def lap_solve(cost):
    """Minimum-cost assignment of rows to columns (rows <= columns).

    Shortest augmenting path formulation with row/column potentials.
    Returns (row_to_col, u, v); see the fallback implementation for the
    contract. Ties resolve toward the lowest column index.
    """
    c_arr = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n_rows = c_arr.shape[0]
    cdef Py_ssize_t n_cols = c_arr.shape[1]
    u_arr = np.zeros(n_rows, dtype=np.float64)
    v_arr = np.zeros(n_cols + 1, dtype=np.float64)
    col_row_arr = np.full(n_cols + 1, -1, dtype=np.int64)
    min_to_arr = np.empty(n_cols, dtype=np.float64)
    parent_arr = np.empty(n_cols, dtype=np.int64)
    used_arr = np.empty(n_cols + 1, dtype=np.uint8)

    cdef const double[:, ::1] c = c_arr
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef cnp.int64_t[::1] col_row = col_row_arr
    cdef double[::1] min_to = min_to_arr
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef cnp.uint8_t[::1] used = used_arr

    cdef Py_ssize_t row, i0, j, j0, j1
    cdef double delta, cur

    with nogil:
        for row in range(n_rows):
            col_row[n_cols] = row
            j0 = n_cols
            for j in range(n_cols):
                min_to[j] = INFINITY
                parent[j] = -1
            for j in range(n_cols + 1):
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = col_row[j0]
                delta = INFINITY
                j1 = -1
                for j in range(n_cols):
                    if used[j]:
                        continue
                    cur = c[i0, j] - u[i0] - v[j]
                    if cur < min_to[j]:
                        min_to[j] = cur
                        parent[j] = j0
                    if min_to[j] < delta:
                        delta = min_to[j]
                        j1 = j
                for j in range(n_cols + 1):
                    if used[j]:
                        u[col_row[j]] += delta
                        v[j] -= delta
                    elif j < n_cols:
                        min_to[j] -= delta
                j0 = j1
                if col_row[j0] == -1:
                    break
            while j0 != n_cols:
                j1 = parent[j0]
                col_row[j0] = col_row[j1]
                j0 = j1

    row_to_col_arr = np.full(n_rows, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] row_to_col = row_to_col_arr
    for j in range(n_cols):
        if col_row[j] >= 0:
            row_to_col[col_row[j]] = j
    return row_to_col_arr, u_arr, v_arr[:n_cols].copy()
