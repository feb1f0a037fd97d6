"""8-bit raster images, adversarial patch application, and mask application.

Pixels are 8-bit samples, row-major, channel-interleaved, held in an
immutable bytes buffer. Keeping everything integer makes the key property
bit-exact: masking a placement that fully covers a patch produces the same
bytes whether or not the patch was applied first, so one covering mask
erases the patch completely.

File formats: binary PPM (P6, 3 channels) and PGM (P5, 1 channel) with
maxval 255, plus a raw format of three little-endian uint32 header fields
(width, height, channels) followed by the samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .geometry import (
    Anchor,
    DomainSize,
    MaskPlacement,
    MaskSpec,
    PatchSpec,
    mask_pixel_set,
)
from .tiling import MaskSet


class ImageError(ValueError):
    """Malformed image data or incompatible dimensions."""


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    channels: int
    pixels: bytes

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ImageError(f"bad dimensions {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise ImageError(f"channels must be 1 or 3, got {self.channels}")
        expected = self.width * self.height * self.channels
        if len(self.pixels) != expected:
            raise ImageError(
                f"pixel buffer holds {len(self.pixels)} bytes, expected {expected}"
            )

    @classmethod
    def filled(cls, width: int, height: int, channels: int = 1, value: int = 0) -> "Image":
        if not 0 <= value <= 255:
            raise ImageError(f"sample value out of range: {value}")
        return cls(width, height, channels, bytes([value]) * (width * height * channels))

    @property
    def domain(self) -> DomainSize:
        return DomainSize(self.width, self.height)

    def get(self, x: int, y: int) -> tuple[int, ...]:
        """Samples of one pixel (test and debugging helper)."""
        base = (y * self.width + x) * self.channels
        return tuple(self.pixels[base : base + self.channels])

    def mean_per_channel(self) -> tuple[int, ...]:
        """Floor of the per-channel mean sample value."""
        count = self.width * self.height
        totals = [0] * self.channels
        for c in range(self.channels):
            totals[c] = sum(self.pixels[c :: self.channels])
        return tuple(t // count for t in totals)


@dataclass(frozen=True)
class FillPolicy:
    """What replaces masked pixels: zeros, fixed values, or the image mean."""

    mode: str
    values: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("zero", "constant", "mean"):
            raise ImageError(f"unknown fill mode {self.mode!r}")
        if self.mode == "constant":
            if not self.values:
                raise ImageError("constant fill needs at least one value")
            if any(not 0 <= v <= 255 for v in self.values):
                raise ImageError(f"fill values out of range: {self.values}")
        elif self.values is not None:
            raise ImageError(f"{self.mode} fill takes no values")

    @classmethod
    def zero(cls) -> "FillPolicy":
        return cls("zero")

    @classmethod
    def constant(cls, *values: int) -> "FillPolicy":
        return cls("constant", tuple(values))

    @classmethod
    def mean(cls) -> "FillPolicy":
        return cls("mean")

    def resolve(self, image: Image) -> bytes:
        """Per-channel fill samples for ``image``."""
        if self.mode == "zero":
            return bytes(image.channels)
        if self.mode == "mean":
            return bytes(image.mean_per_channel())
        if len(self.values) == 1:
            return bytes(self.values * image.channels)
        if len(self.values) != image.channels:
            raise ImageError(
                f"{len(self.values)} fill values for {image.channels} channels"
            )
        return bytes(self.values)


def apply_patch(image: Image, anchor: Anchor, patch: PatchSpec, content: Image) -> Image:
    """Overwrite the patch rectangle at ``anchor`` with ``content``, bit-exact."""
    if (content.width, content.height) != (patch.px, patch.py):
        raise ImageError(
            f"content is {content.width}x{content.height}, patch needs "
            f"{patch.px}x{patch.py}"
        )
    if content.channels != image.channels:
        raise ImageError(
            f"content has {content.channels} channels, image has {image.channels}"
        )
    if not (0 <= anchor.ax <= image.width - patch.px):
        raise ImageError(f"anchor {anchor} not admissible for this image")
    if not (0 <= anchor.ay <= image.height - patch.py):
        raise ImageError(f"anchor {anchor} not admissible for this image")
    ch = image.channels
    buf = bytearray(image.pixels)
    row_len = patch.px * ch
    for row in range(patch.py):
        src = row * row_len
        dst = ((anchor.ay + row) * image.width + anchor.ax) * ch
        buf[dst : dst + row_len] = content.pixels[src : src + row_len]
    return Image(image.width, image.height, ch, bytes(buf))


def apply_mask(
    image: Image,
    placement: MaskPlacement,
    mask: MaskSpec,
    fill: FillPolicy = FillPolicy.zero(),
) -> Image:
    """Replace every pixel under the mask with the fill; overhang is clipped."""
    fill_px = fill.resolve(image)
    ch = image.channels
    buf = bytearray(image.pixels)
    for rect in mask_pixel_set(placement, mask, image.domain):
        row_bytes = fill_px * rect.width
        for y in range(rect.y0, rect.y1):
            start = (y * image.width + rect.x0) * ch
            buf[start : start + len(row_bytes)] = row_bytes
    return Image(image.width, image.height, ch, bytes(buf))


def iter_masked_views(image: Image, mask_set: MaskSet, fill: FillPolicy = FillPolicy.zero()):
    """Yield one masked view per placement, in placement order."""
    cfg = mask_set.config
    if (image.width, image.height) != (cfg.domain.lx, cfg.domain.ly):
        raise ImageError(
            f"image is {image.width}x{image.height}, mask set expects "
            f"{cfg.domain.lx}x{cfg.domain.ly}"
        )
    for placement in mask_set.placements:
        yield apply_mask(image, placement, cfg.mask, fill)


def masked_views(image: Image, mask_set: MaskSet, fill: FillPolicy = FillPolicy.zero()) -> list[Image]:
    return list(iter_masked_views(image, mask_set, fill))


# ---------------------------------------------------------------------------
# File formats


def _read_netpbm_header(data: bytes, magic: bytes) -> tuple[list[int], int]:
    if not data.startswith(magic):
        raise ImageError(f"not a {magic.decode()} file")
    fields = []
    pos = len(magic)
    while len(fields) < 3:
        if pos >= len(data):
            raise ImageError("truncated header")
        b = data[pos : pos + 1]
        if b == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif b.isspace():
            pos += 1
        elif b.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise ImageError(f"unexpected byte {b!r} in header")
    # exactly one whitespace byte separates the header from the samples
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ImageError("missing sample separator")
    return fields, pos + 1


def _decode_netpbm(data: bytes, magic: bytes, channels: int) -> Image:
    (width, height, maxval), pos = _read_netpbm_header(data, magic)
    if maxval != 255:
        raise ImageError(f"only maxval 255 is supported, got {maxval}")
    expected = width * height * channels
    samples = data[pos : pos + expected]
    if len(samples) != expected:
        raise ImageError(f"expected {expected} samples, got {len(samples)}")
    return Image(width, height, channels, samples)


def decode_ppm(data: bytes) -> Image:
    return _decode_netpbm(data, b"P6", 3)


def decode_pgm(data: bytes) -> Image:
    return _decode_netpbm(data, b"P5", 1)


def encode_ppm(image: Image) -> bytes:
    if image.channels != 3:
        raise ImageError("PPM requires 3 channels")
    return b"P6\n%d %d\n255\n" % (image.width, image.height) + image.pixels


def encode_pgm(image: Image) -> bytes:
    if image.channels != 1:
        raise ImageError("PGM requires 1 channel")
    return b"P5\n%d %d\n255\n" % (image.width, image.height) + image.pixels


def decode_raw(data: bytes) -> Image:
    if len(data) < 12:
        raise ImageError("raw image too short for header")
    width, height, channels = struct.unpack("<III", data[:12])
    samples = data[12:]
    if len(samples) != width * height * channels:
        raise ImageError("raw sample count does not match header")
    return Image(width, height, channels, samples)


def encode_raw(image: Image) -> bytes:
    return struct.pack("<III", image.width, image.height, image.channels) + image.pixels


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        data = fh.read()
    name = str(path).lower()
    if name.endswith(".ppm"):
        return decode_ppm(data)
    if name.endswith(".pgm"):
        return decode_pgm(data)
    if name.endswith(".raw"):
        return decode_raw(data)
    if data.startswith(b"P6"):
        return decode_ppm(data)
    if data.startswith(b"P5"):
        return decode_pgm(data)
    return decode_raw(data)


def save_image(path, image: Image) -> None:
    name = str(path).lower()
    if name.endswith(".ppm"):
        payload = encode_ppm(image)
    elif name.endswith(".pgm"):
        payload = encode_pgm(image)
    elif name.endswith(".raw"):
        payload = encode_raw(image)
    else:
        raise ImageError(f"unknown image extension for {path}")
    with open(path, "wb") as fh:
        fh.write(payload)
