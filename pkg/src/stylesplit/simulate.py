"""Synthetic phantom cohorts with simulated segmentation-style variations.

Phantoms are randomized superellipse blobs on a 128x128 grid whose size
tapers toward the first and last slices. The image channel is a blurred,
noisy rendering of the mask, so a plain threshold segmenter recovers the
base shape. Styles are applied to the masks only, per slice, with the
magnitude drawn from a Gaussian, rounded, and clamped to >= 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .masks import (
    Mask,
    Scan,
    Slice,
    centroid_row,
    dilate_pixels,
    erode_pixels,
    half_plane_offset,
    shift_pixels,
)

OPERATIONS = (
    "erosion",
    "dilation",
    "shift-up",
    "shift-down",
    "top-over",
    "top-under",
    "bottom-over",
    "bottom-under",
)

DEFAULT_GRID = (128, 128)
DEFAULT_SPACING = (0.6, 0.6, 2.0)
DEFAULT_SLICES = 6

# background / foreground intensity levels of the rendered image channel
_BG_LEVEL = 30.0
_FG_LEVEL = 200.0
_NOISE_STD = 6.0
_BLUR_SIGMA = 1.0


@dataclass(frozen=True)
class StyleSpec:
    """One simulated segmentation style: an operation plus the Gaussian
    (mean, std) of its per-slice pixel magnitude."""

    operation: str
    magnitude_mean: float
    magnitude_std: float

    def __post_init__(self) -> None:
        if self.operation not in OPERATIONS:
            raise ValueError(
                f"unknown operation {self.operation!r}; expected one of {OPERATIONS}")
        if self.magnitude_mean <= 0:
            raise ValueError("magnitude_mean must be > 0")
        if self.magnitude_std < 0:
            raise ValueError("magnitude_std must be >= 0")

    @property
    def name(self) -> str:
        return f"{self.operation}~N({self.magnitude_mean:g},{self.magnitude_std:g})"

    @classmethod
    def parse(cls, text: str) -> "StyleSpec":
        """Parse 'operation:mean:std', e.g. 'erosion:10:4'."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"style spec {text!r} is not 'operation:mean:std'")
        return cls(parts[0], float(parts[1]), float(parts[2]))


@dataclass(frozen=True)
class StyledCohort:
    """A fully styled cohort plus the bookkeeping the experiments need."""

    scans: tuple[Scan, ...]
    style_labels: dict[str, int]
    pretrain_ids: tuple[str, ...]
    optimize_ids: tuple[str, ...]
    specs: tuple[StyleSpec, ...]
    seed: int

    def __post_init__(self) -> None:
        ids = [s.id for s in self.scans]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate scan ids in cohort")
        pre, opt = set(self.pretrain_ids), set(self.optimize_ids)
        if pre & opt:
            raise ValueError("pretrain and optimize sets overlap")
        if pre | opt != set(ids):
            raise ValueError("pretrain/optimize split does not cover the cohort")
        missing = [i for i in ids if i not in self.style_labels]
        if missing:
            raise ValueError(f"scans without style labels: {missing}")

    def scan(self, scan_id: str) -> Scan:
        for s in self.scans:
            if s.id == scan_id:
                return s
        raise KeyError(scan_id)

    def pretrain_scans(self) -> list[Scan]:
        return [self.scan(i) for i in self.pretrain_ids]

    def optimize_scans(self) -> list[Scan]:
        return [self.scan(i) for i in self.optimize_ids]

    def optimize_labels(self) -> list[int]:
        return [self.style_labels[i] for i in self.optimize_ids]


def _superellipse(shape, cy, cx, ry, rx, power) -> np.ndarray:
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    val = (np.abs((yy - cy) / ry) ** power + np.abs((xx - cx) / rx) ** power)
    return val <= 1.0


def _render_image(mask_px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    smooth = ndimage.gaussian_filter(mask_px.astype(np.float64), _BLUR_SIGMA)
    img = _BG_LEVEL + (_FG_LEVEL - _BG_LEVEL) * smooth
    img += rng.normal(0.0, _NOISE_STD, size=mask_px.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_phantom(seed: int, n_scans: int, slices_per_scan: int = DEFAULT_SLICES,
                     grid: tuple[int, int] = DEFAULT_GRID,
                     spacing: tuple[float, float, float] = DEFAULT_SPACING) -> list[Scan]:
    """Deterministic cohort of blob phantoms (mask + noisy image channel)."""
    if n_scans < 2:
        raise ValueError("need at least 2 scans")
    if slices_per_scan < 3:
        raise ValueError("need at least 3 slices per scan")
    h, w = grid
    if h < 32 or w < 32:
        raise ValueError(f"grid {grid} too small for phantom blobs")
    rng = np.random.default_rng(seed)
    scale = min(h, w) / 128.0
    scans = []
    for i in range(n_scans):
        cy0 = h / 2 + rng.uniform(-6, 6) * scale
        cx0 = w / 2 + rng.uniform(-6, 6) * scale
        ry0 = rng.uniform(20, 32) * scale
        rx0 = rng.uniform(20, 32) * scale
        power = rng.uniform(1.8, 2.8)
        slices = []
        for k in range(slices_per_scan):
            u = (k + 0.5) / slices_per_scan
            taper = 0.65 + 0.35 * math.sin(math.pi * u) ** 0.8
            jitter = rng.uniform(0.96, 1.04, size=2)
            cy = cy0 + rng.uniform(-1.5, 1.5) * scale
            cx = cx0 + rng.uniform(-1.5, 1.5) * scale
            px = _superellipse(grid, cy, cx, ry0 * taper * jitter[0],
                               rx0 * taper * jitter[1], power)
            img = _render_image(px, rng)
            slices.append(Slice(image=img, mask=Mask(px, spacing=spacing[:2])))
        scans.append(Scan(id=f"scan_{i:03d}", slices=tuple(slices), spacing=spacing))
    return scans


def _apply_operation(px: np.ndarray, operation: str, t: int) -> np.ndarray:
    if t == 0:
        return px.copy()
    if operation == "erosion":
        return erode_pixels(px, t)
    if operation == "dilation":
        return dilate_pixels(px, t)
    if operation == "shift-up":
        return shift_pixels(px, 0, -t)
    if operation == "shift-down":
        return shift_pixels(px, 0, t)
    split = centroid_row(px)
    if operation == "top-over":
        return half_plane_offset(px, t, "top", split)
    if operation == "top-under":
        return half_plane_offset(px, -t, "top", split)
    if operation == "bottom-over":
        return half_plane_offset(px, t, "bottom", split)
    if operation == "bottom-under":
        return half_plane_offset(px, -t, "bottom", split)
    raise ValueError(f"unknown operation {operation!r}")


def apply_style(scan: Scan, spec: StyleSpec, rng: np.random.Generator) -> Scan:
    """Transform a scan's masks per slice with Gaussian-magnitude operations.

    The image channel is untouched: styles model observer variation in the
    delineation, not in the underlying image. A magnitude that would wipe a
    slice out is reduced to the largest value keeping >= 1 foreground pixel.
    """
    styled = []
    for sl in scan.slices:
        px = sl.mask.pixels
        t = max(0, int(round(rng.normal(spec.magnitude_mean, spec.magnitude_std))))
        if sl.mask.foreground_count == 0:
            styled.append(sl)
            continue
        out = _apply_operation(px, spec.operation, t)
        while not out.any():
            t -= 1
            out = _apply_operation(px, spec.operation, t)
        styled.append(Slice(image=sl.image, mask=sl.mask.with_pixels(out)))
    return Scan(id=scan.id, slices=tuple(styled), spacing=scan.spacing)


def _pretrain_share(pretrain_count: int, n_styles: int) -> list[int]:
    base = pretrain_count // n_styles
    extra = pretrain_count % n_styles
    return [base + (1 if s < extra else 0) for s in range(n_styles)]


def build_cohort(seed: int, specs: list[StyleSpec], n_scans: int,
                 pretrain_count: int, slices_per_scan: int = DEFAULT_SLICES,
                 grid: tuple[int, int] = DEFAULT_GRID,
                 spacing: tuple[float, float, float] = DEFAULT_SPACING) -> StyledCohort:
    """Generate, style (round-robin assignment), and split a cohort.

    The pretrain set takes the first scans of each style, sized as evenly
    as possible, so both splits stay style-balanced.
    """
    if not specs:
        raise ValueError("need at least one style spec")
    if not 0 < pretrain_count < n_scans:
        raise ValueError("pretrain_count must be in (0, n_scans)")
    base = generate_phantom(seed, n_scans, slices_per_scan, grid, spacing)
    rng = np.random.default_rng(seed + 1)
    labels = {scan.id: i % len(specs) for i, scan in enumerate(base)}
    styled = tuple(apply_style(scan, specs[labels[scan.id]], rng) for scan in base)

    shares = _pretrain_share(pretrain_count, len(specs))
    pretrain: list[str] = []
    taken = [0] * len(specs)
    for scan in styled:
        s = labels[scan.id]
        if taken[s] < shares[s]:
            pretrain.append(scan.id)
            taken[s] += 1
    if len(pretrain) != pretrain_count:
        raise ValueError(
            f"cannot draw a style-balanced pretrain set of {pretrain_count} "
            f"from style sizes {np.bincount(list(labels.values())).tolist()}")
    pre = set(pretrain)
    optimize = tuple(s.id for s in styled if s.id not in pre)
    return StyledCohort(scans=styled, style_labels=labels,
                        pretrain_ids=tuple(pretrain), optimize_ids=optimize,
                        specs=tuple(specs), seed=seed)


LAYOUTS = {
    # total scans, pretrain count, required number of styles
    "two-style": (32, 12, 2),
    "three-style": (32, 11, 3),
}


def build_experiment_cohort(seed: int, specs: list[StyleSpec], layout: str,
                            slices_per_scan: int = DEFAULT_SLICES) -> StyledCohort:
    """The two study layouts: 16+16 scans with a 12/20 pretrain/optimize
    split, or three styles over 32 scans split 11/21 (7 per style)."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {sorted(LAYOUTS)}")
    n_scans, pretrain_count, n_styles = LAYOUTS[layout]
    if len(specs) != n_styles:
        raise ValueError(f"layout {layout!r} needs {n_styles} styles, got {len(specs)}")
    return build_cohort(seed, specs, n_scans, pretrain_count, slices_per_scan)
