"""Dice and surface-Dice scoring of predicted masks against ground truth.

The surface Dice compares the two mask borders: a border pixel counts as a
hit when its center lies within `tolerance_mm` (closed ball) of some border
pixel center of the other mask. Per-slice results are returned as raw
(hits, total) counts so a scan-level score can pool contours across slices
instead of averaging per-slice ratios, which would be undefined for slices
without contours.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import backends
from .masks import Mask, border_arrays


@dataclass(frozen=True)
class MetricConfig:
    """Scoring configuration. tolerance_mm is the surface-Dice margin."""

    tolerance_mm: float = 0.5

    def __post_init__(self) -> None:
        if self.tolerance_mm < 0:
            raise ValueError("tolerance_mm must be >= 0")


@dataclass(frozen=True)
class ScorePair:
    """Dice and surface-Dice ratios, both in [0, 1]."""

    dice: float
    surface_dice: float

    def __post_init__(self) -> None:
        for name, v in (("dice", self.dice), ("surface_dice", self.surface_dice)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def _check_same_grid(g: Mask, p: Mask, need_spacing: bool) -> None:
    if g.pixels.shape != p.pixels.shape:
        raise ValueError(f"mask grids differ: {g.pixels.shape} vs {p.pixels.shape}")
    if need_spacing and g.spacing != p.spacing:
        raise ValueError(f"mask spacings differ: {g.spacing} vs {p.spacing}")


def dice(g: Mask, p: Mask) -> float:
    """2 * |G and P| / (|G| + |P|); 1.0 when both masks are empty."""
    _check_same_grid(g, p, need_spacing=False)
    size = g.foreground_count + p.foreground_count
    if size == 0:
        return 1.0
    inter = int(np.count_nonzero(g.pixels & p.pixels))
    return 2.0 * inter / size


def surface_dice_counts(g: Mask, p: Mask, cfg: MetricConfig) -> tuple[int, int]:
    """Raw surface-Dice counts (hits, total) for one slice pair.

    hits counts g-border pixels within tolerance of p's border plus
    p-border pixels within tolerance of g's border; total is the combined
    border size. Both masks empty gives the (0, 0) sentinel, which scan
    pooling skips.
    """
    _check_same_grid(g, p, need_spacing=True)
    rg, cg = border_arrays(g.pixels)
    rp, cp = border_arrays(p.pixels)
    total = len(rg) + len(rp)
    if len(rg) == 0 or len(rp) == 0:
        return 0, total
    sx, sy = g.spacing
    hits = backends.count_within(rg, cg, rp, cp, sx, sy, cfg.tolerance_mm)
    hits += backends.count_within(rp, cp, rg, cg, sx, sy, cfg.tolerance_mm)
    return hits, total


def surface_dice(g: Mask, p: Mask, cfg: MetricConfig) -> float:
    """Single-slice surface-Dice ratio. Both-empty scores 1.0 by convention."""
    hits, total = surface_dice_counts(g, p, cfg)
    if total == 0:
        return 1.0
    return hits / total


def score_scan(gt: Sequence[Mask], pred: Sequence[Mask], cfg: MetricConfig) -> ScorePair:
    """Scan-level ScorePair with both metrics pooled over slices.

    Dice pools intersections and sizes; surface Dice pools hits and totals,
    skipping slices where both masks are empty. A scan where every slice
    pair is empty has no contour to score and raises ValueError.
    """
    if len(gt) != len(pred):
        raise ValueError(f"slice counts differ: {len(gt)} vs {len(pred)}")
    if not gt:
        raise ValueError("cannot score an empty scan")
    inter_sum = 0
    size_sum = 0
    hit_sum = 0
    total_sum = 0
    for g, p in zip(gt, pred):
        _check_same_grid(g, p, need_spacing=True)
        inter_sum += int(np.count_nonzero(g.pixels & p.pixels))
        size_sum += g.foreground_count + p.foreground_count
        hits, total = surface_dice_counts(g, p, cfg)
        hit_sum += hits
        total_sum += total
    if size_sum == 0 or total_sum == 0:
        raise ValueError("no scoreable slice: every slice pair is empty")
    return ScorePair(dice=2.0 * inter_sum / size_sum, surface_dice=hit_sum / total_sum)
