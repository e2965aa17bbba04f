"""Binary masks and scans on a physical pixel grid.

Masks are immutable boolean grids with per-axis millimetre spacing. All
geometric operations treat pixels as points at their centers: pixel
(row, col) sits at ((col + 0.5) * spacing_x, (row + 0.5) * spacing_y) mm.
Morphology uses a Euclidean disk of integer pixel radius as the
structuring element, and cells beyond the grid edge count as background.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import backends

Spacing2 = tuple[float, float]


class EmptyBoundaryError(ValueError):
    """Raised when an operation needs a nonempty boundary."""


def _as_bool_grid(pixels: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(pixels, dtype=bool)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mask:
    """Immutable binary pixel grid with physical spacing.

    pixels: bool array of shape (height, width), row-major.
    spacing: (mm per pixel along x/columns, mm per pixel along y/rows).
    """

    pixels: np.ndarray
    spacing: Spacing2 = (1.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _as_bool_grid(self.pixels))
        if self.pixels.ndim != 2 or 0 in self.pixels.shape:
            raise ValueError(f"mask grid must be 2D and nonempty, got shape {self.pixels.shape}")
        sx, sy = self.spacing
        if sx <= 0 or sy <= 0:
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        object.__setattr__(self, "spacing", (float(sx), float(sy)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.pixels))

    def same_geometry(self, other: "Mask") -> bool:
        return self.pixels.shape == other.pixels.shape and self.spacing == other.spacing

    def with_pixels(self, pixels: np.ndarray) -> "Mask":
        return Mask(pixels, self.spacing)


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Border pixels of a mask plus their physical-coordinate mapping.

    rows/cols are int32 arrays in row-major order. Every listed pixel is
    foreground with at least one 4-neighbor that is background or outside
    the grid.
    """

    rows: np.ndarray
    cols: np.ndarray
    spacing: Spacing2

    def __len__(self) -> int:
        return len(self.rows)

    def point_set(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def physical(self) -> np.ndarray:
        """(K, 2) array of (x, y) mm coordinates of the border pixel centers."""
        sx, sy = self.spacing
        out = np.empty((len(self.rows), 2), dtype=np.float64)
        out[:, 0] = (self.cols + 0.5) * sx
        out[:, 1] = (self.rows + 0.5) * sy
        return out


@dataclass(frozen=True, eq=False)
class Slice:
    """One axial slice: a grayscale image (uint8) and its mask."""

    image: np.ndarray
    mask: Mask

    def __post_init__(self) -> None:
        img = np.ascontiguousarray(self.image, dtype=np.uint8)
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        if img.shape != self.mask.pixels.shape:
            raise ValueError("image and mask grids differ in shape")


@dataclass(frozen=True, eq=False)
class Scan:
    """An ordered stack of slices with (x, y, z) mm voxel spacing."""

    id: str
    slices: tuple[Slice, ...]
    spacing: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "slices", tuple(self.slices))
        if not self.slices:
            raise ValueError("scan needs at least one slice")
        shape = self.slices[0].mask.pixels.shape
        plane = self.slices[0].mask.spacing
        for s in self.slices:
            if s.mask.pixels.shape != shape or s.mask.spacing != plane:
                raise ValueError(f"scan {self.id}: slices disagree on geometry")
        if plane != (float(self.spacing[0]), float(self.spacing[1])):
            raise ValueError(f"scan {self.id}: in-plane spacing does not match slice masks")
        if not any(s.mask.foreground_count for s in self.slices):
            raise ValueError(f"scan {self.id}: no slice has foreground")

    def masks(self) -> list[Mask]:
        return [s.mask for s in self.slices]

    def __iter__(self) -> Iterator[Slice]:
        return iter(self.slices)

    def __len__(self) -> int:
        return len(self.slices)


# -- array-level helpers (hot path; operate on uint8 0/1 grids) --------------

def _kernel_view(pixels: np.ndarray) -> np.ndarray:
    if pixels.dtype == np.bool_:
        return pixels.view(np.uint8)
    return np.ascontiguousarray(pixels, dtype=np.uint8)


def erode_pixels(pixels: np.ndarray, radius: int) -> np.ndarray:
    out = backends.disk_erode(_kernel_view(pixels), radius)
    return out.view(bool)


def dilate_pixels(pixels: np.ndarray, radius: int) -> np.ndarray:
    out = backends.disk_dilate(_kernel_view(pixels), radius)
    return out.view(bool)


def offset_pixels(pixels: np.ndarray, offset: int) -> np.ndarray:
    """Signed boundary offset: dilate for positive values, erode for negative."""
    if offset >= 0:
        return dilate_pixels(pixels, offset)
    return erode_pixels(pixels, -offset)


def shift_pixels(pixels: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx columns, dy rows); content shifted off-grid is dropped."""
    h, w = pixels.shape
    out = np.zeros_like(pixels)
    rs, re = max(dy, 0), min(h + dy, h)
    cs, ce = max(dx, 0), min(w + dx, w)
    if rs < re and cs < ce:
        out[rs:re, cs:ce] = pixels[rs - dy:re - dy, cs - dx:ce - dx]
    return out


def centroid_row(pixels: np.ndarray) -> float:
    """Mean row index of the foreground. Requires a nonempty mask."""
    rows = np.nonzero(pixels)[0]
    if len(rows) == 0:
        raise ValueError("centroid of an empty mask is undefined")
    return float(rows.mean())


def half_plane_offset(pixels: np.ndarray, offset: int, half: str, split_row: float) -> np.ndarray:
    """Apply a signed boundary offset to one half-plane only.

    half='top' changes rows strictly above split_row (row index < split_row),
    half='bottom' rows strictly below it. The other half keeps the original
    pixels, which makes the seam the union of the two restrictions.
    """
    if offset == 0:
        return pixels.copy()
    moved = offset_pixels(pixels, offset)
    h = pixels.shape[0]
    row_idx = np.arange(h)
    if half == "top":
        in_half = row_idx < split_row
    elif half == "bottom":
        in_half = row_idx > split_row
    else:
        raise ValueError(f"half must be 'top' or 'bottom', got {half!r}")
    out = np.where(in_half[:, None], moved, pixels)
    return out


def border_arrays(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (rows, cols) int32 arrays of the inner 4-connectivity border."""
    return backends.border_points(_kernel_view(pixels))


# -- Mask-level operations ----------------------------------------------------

def erode(m: Mask, radius: int) -> Mask:
    """Keep pixels whose entire Euclidean disk neighborhood is foreground."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return m.with_pixels(erode_pixels(m.pixels, radius))


def dilate(m: Mask, radius: int) -> Mask:
    """Add every pixel within the Euclidean disk radius of the foreground."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return m.with_pixels(dilate_pixels(m.pixels, radius))


def shift(m: Mask, dx: int, dy: int) -> Mask:
    """Translate the foreground by (dx, dy) pixels, clipping at the grid."""
    if abs(dx) >= m.width or abs(dy) >= m.height:
        raise ValueError(f"shift ({dx}, {dy}) out of range for {m.width}x{m.height} grid")
    return m.with_pixels(shift_pixels(m.pixels, dx, dy))


def boundary(m: Mask) -> BoundarySet:
    """Foreground pixels with a background or out-of-grid 4-neighbor."""
    rows, cols = border_arrays(m.pixels)
    return BoundarySet(rows=rows, cols=cols, spacing=m.spacing)


def boundary_distance_field(b: BoundarySet, shape: tuple[int, int]) -> np.ndarray:
    """Per-pixel minimum distance in mm from pixel centers to the boundary.

    Exact: identical to minimizing over every boundary point directly.
    Raises EmptyBoundaryError for an empty boundary set.
    """
    if len(b) == 0:
        raise EmptyBoundaryError("cannot build a distance field from an empty boundary")
    height, width = shape
    sx, sy = b.spacing
    return backends.distance_field(b.rows, b.cols, height, width, sx, sy)
