"""Pure numpy implementations of the pixel-grid kernels.

This backend is the portable reference: every function here defines the
semantics that the compiled backend must reproduce bit-for-bit. It is
selected automatically when the compiled extension is unavailable, or
explicitly via ``STYLESPLIT_BACKEND=pure``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

NAME = "pure"


@lru_cache(maxsize=64)
def _disk_offsets(radius: int) -> tuple[tuple[int, int], ...]:
    """Integer offsets (dr, dc) with dr^2 + dc^2 <= radius^2."""
    span = np.arange(-radius, radius + 1)
    dr, dc = np.meshgrid(span, span, indexing="ij")
    keep = dr * dr + dc * dc <= radius * radius
    return tuple(zip(dr[keep].tolist(), dc[keep].tolist()))


def _shifted(mask: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """mask translated by (dr, dc), out-of-grid cells filled with False."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    rs, re = max(dr, 0), min(h + dr, h)
    cs, ce = max(dc, 0), min(w + dc, w)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = mask[rs - dr:re - dr, cs - dc:ce - dc]
    return out


def disk_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Union of Euclidean disks of `radius` around every foreground pixel."""
    if radius == 0:
        return mask.copy()
    out = np.zeros_like(mask)
    for dr, dc in _disk_offsets(radius):
        out |= _shifted(mask, dr, dc)
    return out

def disk_erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Pixels whose whole disk neighborhood lies inside the grid and the
    foreground. Cells beyond the grid edge count as background."""
    if radius == 0:
        return mask.copy()
    out = mask.copy()
    for dr, dc in _disk_offsets(radius):
        out &= _shifted(mask, -dr, -dc)
    return out


def border_points(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inner 4-connectivity border, returned row-major as (rows, cols).

    A foreground pixel belongs to the border when at least one of its four
    edge neighbors is background or outside the grid.
    """
    interior = (
        mask
        & _shifted(mask, 1, 0)
        & _shifted(mask, -1, 0)
        & _shifted(mask, 0, 1)
        & _shifted(mask, 0, -1)
    )
    rows, cols = np.nonzero(mask & ~interior)
    return rows.astype(np.int32), cols.astype(np.int32)


def count_within(
    rows_a: np.ndarray,
    cols_a: np.ndarray,
    rows_b: np.ndarray,
    cols_b: np.ndarray,
    spacing_x: float,
    spacing_y: float,
    tolerance_mm: float,
) -> int:
    """Number of points in A whose nearest point of B is within tolerance.

    Distances are Euclidean between pixel centers in millimetres. The
    comparison is done on squared distances against tolerance^2, closed
    ball semantics.
    """
    if len(rows_a) == 0 or len(rows_b) == 0:
        return 0
    dy = (rows_a[:, None] - rows_b[None, :]).astype(np.float64) * spacing_y
    dx = (cols_a[:, None] - cols_b[None, :]).astype(np.float64) * spacing_x
    sq = dx * dx + dy * dy
    limit = tolerance_mm * tolerance_mm
    return int(np.count_nonzero(sq.min(axis=1) <= limit))


def distance_field(
    rows: np.ndarray,
    cols: np.ndarray,
    height: int,
    width: int,
    spacing_x: float,
    spacing_y: float,
) -> np.ndarray:
    """Exact per-pixel minimum distance (mm) from pixel centers to the
    given points, by direct minimization over all points."""
    if len(rows) == 0:
        raise ValueError("distance_field requires at least one point")
    grid_r = np.arange(height, dtype=np.float64)
    grid_c = np.arange(width, dtype=np.float64)
    out = np.empty((height, width), dtype=np.float64)
    # Row-chunked to bound the temporary (height x width x points) product.
    chunk = max(1, int(2_000_000 // max(1, len(rows) * width)))
    for start in range(0, height, chunk):
        stop = min(start + chunk, height)
        dy = (grid_r[start:stop, None] - rows[None, :]) * spacing_y
        dx = (grid_c[:, None] - cols[None, :]) * spacing_x
        sq = (dx * dx)[None, :, :] + (dy * dy)[:, None, :]
        out[start:stop] = np.sqrt(sq.min(axis=2))
    return out
