"""Mask-set construction strategies and closed-form mask-count bounds.

Three constructions are provided. ``single_cover_2d`` paves the anchor space
once with contiguous effective regions. ``replicated_tiling`` repeats that
pavement k times. ``offset_tiling`` interleaves k = m * n shifted toroidal
grids with integer strides so every anchor is covered by at least m masks
horizontally and n vertically.

``paper_bounds`` evaluates the theoretical quantities: the per-axis and 2-D
single-cover lower bounds, the k-fold lower bound, the replicated count and
its approximation ratio (at most 2), and the offset-tiling count formula.
The constructive placement counts are discrete and may differ from these
continuous-form values; both are exposed so they can be compared.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .geometry import DomainSize, GeometryError, MaskPlacement, MaskSpec, PatchSpec

MASK_SET_FORMAT_VERSION = 1

STRATEGY_SINGLE = "single"
STRATEGY_REPLICATED = "replicated"
STRATEGY_OFFSET = "offset"


class TilingError(ValueError):
    """Invalid tiling configuration."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def default_fold_split(k: int) -> tuple[int, int]:
    """Default factorization k = m * n with m the largest divisor <= sqrt(k)."""
    if k < 1:
        raise TilingError(f"coverage multiplicity must be >= 1, got {k}")
    m = 1
    for d in range(1, math.isqrt(k) + 1):
        if k % d == 0:
            m = d
    return m, k // m


@dataclass(frozen=True)
class TilingConfig:
    """Geometry plus coverage requirements for one mask-set construction.

    ``m`` and ``n`` are the horizontal and vertical fold factors used by the
    offset strategy; they must multiply to ``k``. When omitted, a default
    factorization is chosen.
    """

    domain: DomainSize
    mask: MaskSpec
    patch: PatchSpec
    k: int = 1
    m: int | None = None
    n: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise TilingError(f"coverage multiplicity must be >= 1, got {self.k}")
        if self.mask.mx < self.patch.px or self.mask.my < self.patch.py:
            raise TilingError(
                f"mask {self.mask.mx}x{self.mask.my} smaller than patch "
                f"{self.patch.px}x{self.patch.py}"
            )
        m, n = self.m, self.n
        if m is None and n is None:
            m, n = default_fold_split(self.k)
        elif m is None:
            if n < 1 or self.k % n != 0:
                raise TilingError(f"n={n} does not divide k={self.k}")
            m = self.k // n
        elif n is None:
            if m < 1 or self.k % m != 0:
                raise TilingError(f"m={m} does not divide k={self.k}")
            n = self.k // m
        if m < 1 or n < 1 or m * n != self.k:
            raise TilingError(f"fold factors {m}x{n} do not multiply to k={self.k}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)


@dataclass(frozen=True)
class MaskSet:
    """An ordered set of mask placements together with its construction data."""

    config: TilingConfig
    strategy: str
    placements: tuple[MaskPlacement, ...]
    stride_x: int | None = None
    stride_y: int | None = None

    def __len__(self) -> int:
        return len(self.placements)

    @property
    def k(self) -> int:
        return self.config.k


@dataclass(frozen=True)
class BoundsReport:
    """Closed-form mask-count bounds for one configuration.

    ``approx_ratio`` is replicated_count / kfold_lb as an exact rational;
    it never exceeds 2.
    """

    single_lb_1d_x: int
    single_lb_1d_y: int
    single_lb_2d: int
    kfold_lb: int
    replicated_count: int
    offset_count: int
    approx_ratio: Fraction = field(compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "single_lb_1d_x": self.single_lb_1d_x,
            "single_lb_1d_y": self.single_lb_1d_y,
            "single_lb_2d": self.single_lb_2d,
            "kfold_lb": self.kfold_lb,
            "replicated_count": self.replicated_count,
            "offset_count": self.offset_count,
            "approx_ratio": f"{self.approx_ratio.numerator}/{self.approx_ratio.denominator}",
        }


def paper_bounds(config: TilingConfig) -> BoundsReport:
    """Evaluate the closed-form bound formulas for ``config``.

    Requires a strictly larger mask than patch on both axes; the formulas
    divide by the margins mx - px and my - py.
    """
    mx, my = config.mask.mx, config.mask.my
    px, py = config.patch.px, config.patch.py
    lx, ly = config.domain.lx, config.domain.ly
    if mx <= px or my <= py:
        raise TilingError("mask cannot cover patch: needs mx > px and my > py")
    gx, gy = mx - px, my - py
    lb_x = _ceil_div(lx, gx)
    lb_y = _ceil_div(ly, gy)
    lb_2d = _ceil_div(lx * ly, gx * gy)
    kfold_lb = config.k * lb_2d
    replicated = config.k * lb_x * lb_y
    offset = _ceil_div(config.m * lx, gx) * _ceil_div(config.n * ly, gy)
    return BoundsReport(
        single_lb_1d_x=lb_x,
        single_lb_1d_y=lb_y,
        single_lb_2d=lb_2d,
        kfold_lb=kfold_lb,
        replicated_count=replicated,
        offset_count=offset,
        approx_ratio=Fraction(replicated, kfold_lb),
    )


def single_cover_1d(length: int, mask_extent: int, patch_extent: int) -> list[int]:
    """Start offsets of a minimal 1-D single cover of all admissible anchors.

    Effective extents (mask_extent - patch_extent + 1 anchors each) are laid
    contiguously from 0; the last mask may overhang the domain.
    """
    if mask_extent < patch_extent:
        raise TilingError(
            f"mask extent {mask_extent} smaller than patch extent {patch_extent}"
        )
    if length < patch_extent:
        raise GeometryError(f"patch extent {patch_extent} exceeds domain {length}")
    effective = mask_extent - patch_extent + 1
    anchors = length - patch_extent + 1
    return [i * effective for i in range(_ceil_div(anchors, effective))]


def single_cover_2d(config: TilingConfig) -> MaskSet:
    """Cartesian product of the per-axis single covers; no wrap."""
    xs = single_cover_1d(config.domain.lx, config.mask.mx, config.patch.px)
    ys = single_cover_1d(config.domain.ly, config.mask.my, config.patch.py)
    placements = tuple(
        MaskPlacement(x, y, wrap=False) for y in ys for x in xs
    )
    return MaskSet(config=config, strategy=STRATEGY_SINGLE, placements=placements)


def replicated_tiling(config: TilingConfig) -> MaskSet:
    """k concatenated copies of the single cover (distinct mask identities)."""
    base = single_cover_2d(config)
    return MaskSet(
        config=config,
        strategy=STRATEGY_REPLICATED,
        placements=base.placements * config.k,
    )


def offset_tiling(config: TilingConfig) -> MaskSet:
    """Interleaved toroidal grids achieving k = m * n fold coverage.

    Strides are integer: sx = floor(Ex / m) with Ex = mx - px + 1, capped at
    floor(lx / m) when the effective extent exceeds the domain so that at
    least m distinct columns of masks exist (symmetrically for y). Every
    anchor is then covered by >= m masks horizontally and >= n vertically.
    """
    lx, ly = config.domain.lx, config.domain.ly
    ex = config.mask.mx - config.patch.px + 1
    ey = config.mask.my - config.patch.py + 1
    sx = min(ex, lx) // config.m
    sy = min(ey, ly) // config.n
    if sx < 1 or sy < 1:
        raise TilingError("k too large for mask/patch geometry")
    xs = [(i * sx) % lx for i in range(_ceil_div(lx, sx))]
    ys = [(j * sy) % ly for j in range(_ceil_div(ly, sy))]
    seen: dict[tuple[int, int], None] = {}
    for y in ys:
        for x in xs:
            seen.setdefault((y, x), None)
    placements = tuple(MaskPlacement(x, y, wrap=True) for (y, x) in sorted(seen))
    return MaskSet(
        config=config,
        strategy=STRATEGY_OFFSET,
        placements=placements,
        stride_x=sx,
        stride_y=sy,
    )


def build_mask_set(config: TilingConfig, strategy: str) -> MaskSet:
    if strategy == STRATEGY_SINGLE:
        return single_cover_2d(config)
    if strategy == STRATEGY_REPLICATED:
        return replicated_tiling(config)
    if strategy == STRATEGY_OFFSET:
        return offset_tiling(config)
    raise TilingError(f"unknown strategy {strategy!r}")


def forward_pass_counts(n1: int, k: int = 1) -> dict[str, int]:
    """Classifier forward passes per image: one masking round vs. two.

    The single-round pipeline evaluates each of the n1 masks once. The
    two-round baseline evaluates n1 first-round masks plus all n1 * n1
    second-round pairs. Counts depend only on n1.
    """
    if n1 < 1:
        raise TilingError(f"mask count must be >= 1, got {n1}")
    if k < 1:
        raise TilingError(f"coverage multiplicity must be >= 1, got {k}")
    return {"certmask": n1, "double_masking": n1 + n1 * n1}


def mask_set_to_dict(mask_set: MaskSet) -> dict[str, Any]:
    cfg = mask_set.config
    return {
        "version": MASK_SET_FORMAT_VERSION,
        "domain": {"lx": cfg.domain.lx, "ly": cfg.domain.ly},
        "mask": {"mx": cfg.mask.mx, "my": cfg.mask.my},
        "patch": {"px": cfg.patch.px, "py": cfg.patch.py},
        "k": cfg.k,
        "m": cfg.m,
        "n": cfg.n,
        "strategy": mask_set.strategy,
        "stride_x": mask_set.stride_x,
        "stride_y": mask_set.stride_y,
        "placements": [
            {"x0": p.x0, "y0": p.y0, "wrap": p.wrap} for p in mask_set.placements
        ],
    }


def mask_set_from_dict(data: dict[str, Any]) -> MaskSet:
    version = data.get("version")
    if version != MASK_SET_FORMAT_VERSION:
        raise TilingError(f"unsupported mask-set format version {version!r}")
    config = TilingConfig(
        domain=DomainSize(data["domain"]["lx"], data["domain"]["ly"]),
        mask=MaskSpec(data["mask"]["mx"], data["mask"]["my"]),
        patch=PatchSpec(data["patch"]["px"], data["patch"]["py"]),
        k=data["k"],
        m=data["m"],
        n=data["n"],
    )
    placements = tuple(
        MaskPlacement(p["x0"], p["y0"], bool(p["wrap"])) for p in data["placements"]
    )
    if not placements:
        raise TilingError("mask set has no placements")
    return MaskSet(
        config=config,
        strategy=data["strategy"],
        placements=placements,
        stride_x=data.get("stride_x"),
        stride_y=data.get("stride_y"),
    )


def dump_mask_set(mask_set: MaskSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mask_set_to_dict(mask_set), fh, indent=2)
        fh.write("\n")


def load_mask_set(path) -> MaskSet:
    with open(path, "r", encoding="utf-8") as fh:
        return mask_set_from_dict(json.load(fh))
