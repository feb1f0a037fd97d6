"""Integer pixel-grid geometry for rectangular patches and occluding masks.

Coordinates are pixel indices on an lx-by-ly grid. Rectangles are half-open:
a ``Rect`` covers columns ``x0..x1-1`` and rows ``y0..y1-1``. A candidate
patch position is identified by its top-left anchor. A mask may be placed
anywhere, including partially or fully outside the grid; with ``wrap=True``
the placement is toroidal and its pixel set splits at the domain seam.

The central predicate is :func:`fully_covers`: a mask neutralizes a patch
exactly when every patch pixel falls inside the mask's pixel set. The set
of anchors satisfying it for one mask is its effective anchor region, an
interval of ``mx - px + 1`` positions per axis for an interior mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator


class GeometryError(ValueError):
    """Invalid geometric configuration."""


@dataclass(frozen=True)
class DomainSize:
    """Pixel dimensions of the defended image domain."""

    lx: int
    ly: int

    def __post_init__(self):
        if self.lx < 1 or self.ly < 1:
            raise GeometryError(f"domain must be at least 1x1, got {self.lx}x{self.ly}")


@dataclass(frozen=True)
class PatchSpec:
    """Width and height of the adversarial patch, in pixels."""

    px: int
    py: int

    def __post_init__(self):
        if self.px < 1 or self.py < 1:
            raise GeometryError(f"patch must be at least 1x1, got {self.px}x{self.py}")


@dataclass(frozen=True)
class MaskSpec:
    """Width and height of one occluding mask, in pixels."""

    mx: int
    my: int

    def __post_init__(self):
        if self.mx < 1 or self.my < 1:
            raise GeometryError(f"mask must be at least 1x1, got {self.mx}x{self.my}")


@dataclass(frozen=True)
class Anchor:
    """Top-left pixel of a candidate patch position."""

    ax: int
    ay: int


@dataclass(frozen=True)
class MaskPlacement:
    """Top-left corner of one mask. May lie outside the domain when wrap is off.

    With ``wrap=True`` the mask is toroidal; placements are stored canonically
    with ``0 <= x0 < lx`` and ``0 <= y0 < ly`` by the tiling constructors.
    """

    x0: int
    y0: int
    wrap: bool = False


@dataclass(frozen=True)
class Rect:
    """Half-open axis-aligned rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return max(0, self.width) * max(0, self.height)

    def is_empty(self) -> bool:
        return self.x1 <= self.x0 or self.y1 <= self.y0

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass(frozen=True)
class AnchorRange:
    """Inclusive ranges of admissible anchor coordinates."""

    ax_min: int
    ax_max: int
    ay_min: int
    ay_max: int

    @property
    def count(self) -> int:
        return (self.ax_max - self.ax_min + 1) * (self.ay_max - self.ay_min + 1)

    def __contains__(self, anchor: Anchor) -> bool:
        return (
            self.ax_min <= anchor.ax <= self.ax_max
            and self.ay_min <= anchor.ay <= self.ay_max
        )

    def __iter__(self) -> Iterator[Anchor]:
        for ay in range(self.ay_min, self.ay_max + 1):
            for ax in range(self.ax_min, self.ax_max + 1):
                yield Anchor(ax, ay)


def admissible_anchors(domain: DomainSize, patch: PatchSpec) -> AnchorRange:
    """Range of top-left positions at which the patch fits inside the domain."""
    if patch.px > domain.lx or patch.py > domain.ly:
        raise GeometryError(
            f"patch exceeds domain: {patch.px}x{patch.py} vs {domain.lx}x{domain.ly}"
        )
    return AnchorRange(0, domain.lx - patch.px, 0, domain.ly - patch.py)


def _axis_pieces(start: int, extent: int, length: int) -> list[tuple[int, int]]:
    # Wrapped 1-D footprint of [start, start+extent) on a ring of `length`
    # pixels, as disjoint in-bounds intervals. An extent >= length saturates
    # the axis rather than overlapping itself.
    s = start % length
    if extent >= length:
        return [(0, length)]
    end = s + extent
    if end <= length:
        return [(s, end)]
    return [(s, length), (0, end - length)]


def mask_pixel_set(
    placement: MaskPlacement, mask: MaskSpec, domain: DomainSize
) -> list[Rect]:
    """Domain pixels occluded by one mask, as 1 to 4 disjoint rectangles.

    Without wrap the footprint is clipped at the domain border (an empty
    intersection yields an empty list). With wrap it splits at the seam.
    """
    if placement.wrap:
        xs = _axis_pieces(placement.x0, mask.mx, domain.lx)
        ys = _axis_pieces(placement.y0, mask.my, domain.ly)
        return [Rect(a, c, b, d) for (c, d) in ys for (a, b) in xs]
    x0 = max(placement.x0, 0)
    y0 = max(placement.y0, 0)
    x1 = min(placement.x0 + mask.mx, domain.lx)
    y1 = min(placement.y0 + mask.my, domain.ly)
    rect = Rect(x0, y0, x1, y1)
    return [] if rect.is_empty() else [rect]


def _axis_covered(pieces: list[tuple[int, int]], lo: int, extent: int) -> bool:
    # The patch cannot wrap, so its interval must sit inside a single piece.
    return any(a <= lo and lo + extent <= b for a, b in pieces)


def fully_covers(
    placement: MaskPlacement,
    mask: MaskSpec,
    anchor: Anchor,
    patch: PatchSpec,
    domain: DomainSize,
) -> bool:
    """True iff every pixel of the patch at ``anchor`` lies under the mask."""
    if not placement.wrap:
        return (
            placement.x0 <= anchor.ax
            and anchor.ax + patch.px <= placement.x0 + mask.mx
            and placement.y0 <= anchor.ay
            and anchor.ay + patch.py <= placement.y0 + mask.my
        )
    xs = _axis_pieces(placement.x0, mask.mx, domain.lx)
    ys = _axis_pieces(placement.y0, mask.my, domain.ly)
    return _axis_covered(xs, anchor.ax, patch.px) and _axis_covered(
        ys, anchor.ay, patch.py
    )


def _anchor_intervals(
    pieces: list[tuple[int, int]], patch_extent: int, limit: int
) -> list[tuple[int, int]]:
    # Half-open anchor intervals covered by each pixel piece, clipped to the
    # admissible range [0, limit - patch_extent].
    hi_adm = limit - patch_extent + 1
    out = []
    for a, b in pieces:
        lo = max(a, 0)
        hi = min(b - patch_extent + 1, hi_adm)
        if hi > lo:
            out.append((lo, hi))
    return out


def effective_anchor_region(
    placement: MaskPlacement,
    mask: MaskSpec,
    patch: PatchSpec,
    domain: DomainSize,
) -> list[Rect]:
    """All anchors the mask fully covers, as at most 4 disjoint rectangles.

    For an interior unwrapped mask this is a single rectangle spanning
    ``mx - px + 1`` by ``my - py + 1`` anchor positions. A mask smaller than
    the patch covers nothing (empty result, not an error).
    """
    if mask.mx < patch.px or mask.my < patch.py:
        return []
    if patch.px > domain.lx or patch.py > domain.ly:
        return []
    if placement.wrap:
        xs = _axis_pieces(placement.x0, mask.mx, domain.lx)
        ys = _axis_pieces(placement.y0, mask.my, domain.ly)
    else:
        xs = [(placement.x0, placement.x0 + mask.mx)]
        ys = [(placement.y0, placement.y0 + mask.my)]
    xi = _anchor_intervals(xs, patch.px, domain.lx)
    yi = _anchor_intervals(ys, patch.py, domain.ly)
    return [Rect(a, c, b, d) for (c, d) in yi for (a, b) in xi]
