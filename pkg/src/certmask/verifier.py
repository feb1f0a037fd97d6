"""Exhaustive coverage oracle for mask sets.

Coverage is defined on patch anchors, not pixels: the multiplicity of an
anchor is the number of masks that fully cover a patch placed there. The
oracle computes it for every admissible anchor and reports the extremes,
a multiplicity histogram, and any anchors falling short of the required
fold k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .geometry import (
    Anchor,
    admissible_anchors,
    effective_anchor_region,
    fully_covers,
)
from .tiling import MaskSet

DEFAULT_GAP_LIMIT = 128


@dataclass(frozen=True)
class CoverageReport:
    min_multiplicity: int
    max_multiplicity: int
    histogram: dict[int, int]
    gaps: tuple[Anchor, ...]
    anchors_checked: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_multiplicity": self.min_multiplicity,
            "max_multiplicity": self.max_multiplicity,
            "histogram": {str(m): c for m, c in sorted(self.histogram.items())},
            "gaps": [{"ax": a.ax, "ay": a.ay} for a in self.gaps],
            "anchors_checked": self.anchors_checked,
        }


def multiplicity_grid(mask_set: MaskSet) -> np.ndarray:
    """Per-anchor cover counts as an array indexed [ay, ax].

    Raises if the patch does not fit the domain at all.
    """
    cfg = mask_set.config
    ranges = admissible_anchors(cfg.domain, cfg.patch)
    nx = ranges.ax_max + 1
    ny = ranges.ay_max + 1
    grid = np.zeros((ny, nx), dtype=np.int64)
    for placement in mask_set.placements:
        for rect in effective_anchor_region(placement, cfg.mask, cfg.patch, cfg.domain):
            grid[rect.y0 : rect.y1, rect.x0 : rect.x1] += 1
    return grid


def verify(mask_set: MaskSet, gap_limit: int = DEFAULT_GAP_LIMIT) -> CoverageReport:
    """Check k-fold coverage of every admissible anchor.

    The gap list is capped at ``gap_limit`` entries (row-major order); the
    histogram and extremes are always exact over all anchors.
    """
    if gap_limit < 1:
        raise ValueError(f"gap limit must be >= 1, got {gap_limit}")
    grid = multiplicity_grid(mask_set)
    values, counts = np.unique(grid, return_counts=True)
    histogram = {int(v): int(c) for v, c in zip(values, counts)}
    short = np.argwhere(grid < mask_set.config.k)
    gaps = tuple(Anchor(ax=int(x), ay=int(y)) for y, x in short[:gap_limit])
    return CoverageReport(
        min_multiplicity=int(grid.min()),
        max_multiplicity=int(grid.max()),
        histogram=histogram,
        gaps=gaps,
        anchors_checked=int(grid.size),
    )


def covering_set(mask_set: MaskSet, anchor: Anchor) -> list[int]:
    """Indices of the masks that fully cover a patch anchored at ``anchor``."""
    cfg = mask_set.config
    if anchor not in admissible_anchors(cfg.domain, cfg.patch):
        raise ValueError(f"anchor {anchor} not admissible")
    return [
        i
        for i, placement in enumerate(mask_set.placements)
        if fully_covers(placement, cfg.mask, anchor, cfg.patch, cfg.domain)
    ]
