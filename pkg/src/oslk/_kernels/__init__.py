"""Kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementation when
the extension was not built. Set OSLK_FORCE_PURE=1 to skip the extension
(useful for benchmarking and for verifying backend equivalence).
"""
import logging
import os

logger = logging.getLogger(__name__)

_force_pure = os.environ.get("OSLK_FORCE_PURE", "") not in ("", "0")

if _force_pure:
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _pure as _impl

        BACKEND = "pure"
        logger.info("compiled kernels unavailable; using the NumPy fallback")

rect_intersection_area = _impl.rect_intersection_area
pairwise_rect_intersection_area = _impl.pairwise_rect_intersection_area
lap_solve = _impl.lap_solve


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'pure'."""
    return BACKEND
