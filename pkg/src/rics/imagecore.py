"""Image containers, PGM/PPM/PNG I/O, luminance conversion, and crop geometry.

Two translation modes are supported everywhere:

* ``realistic`` -- a window sliding over a larger source; pixels leave one
  edge and new pixels enter the opposite edge (crop-shift).
* ``cyclic`` -- circular shift with wraparound; the column leaving one side
  reappears on the other.

All containers are immutable after construction and all geometry operations
are pure functions: same inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

REALISTIC = "realistic"
CYCLIC = "cyclic"
MODES = (REALISTIC, CYCLIC)

# Sanity cap on decoded size: width*height*channels must stay below this.
MAX_SAMPLES = 1 << 31


class ImageFormatError(ValueError):
    """Unreadable, malformed, or unsupported image file."""


class GeometryError(ValueError):
    """Crop or translation violates the geometry invariant of its mode."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ImageBuf:
    """Raster image: uint8 samples, shape ``(height, width, channels)``.

    ``channels`` is 1 (gray) or 3 (RGB). The pixel array is made read-only;
    create a new ``ImageBuf`` instead of mutating.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageBuf) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class LumaPlane:
    """Single luminance plane: uint8 values, shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype != np.uint8:
            raise ValueError(f"values must be uint8, got {v.dtype}")
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected 2-D (H, W) array, got shape {v.shape}")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, LumaPlane) and np.array_equal(self.values, other.values)


PixelSource = Union[ImageBuf, LumaPlane]


@dataclass(frozen=True)
class CropWindow:
    """A k-by-k crop at integer offsets (top, left), in one of the two modes.

    Realistic windows must lie fully inside the image; cyclic windows may
    start anywhere and wrap around both axes.
    """

    top: int
    left: int
    size: int
    mode: str = REALISTIC

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.size < 1:
            raise ValueError("crop size must be >= 1")

    def validate_for(self, height: int, width: int) -> None:
        """Raise GeometryError unless this window is legal for an H-by-W image."""
        if self.mode == REALISTIC:
            if not (0 <= self.top <= height - self.size and 0 <= self.left <= width - self.size):
                raise GeometryError(
                    f"realistic window (top={self.top}, left={self.left}, k={self.size}) "
                    f"outside {height}x{width} image"
                )
        else:
            if not (0 <= self.top < height and 0 <= self.left < width):
                raise GeometryError(
                    f"cyclic window origin (top={self.top}, left={self.left}) "
                    f"outside {height}x{width} image"
                )
            if self.size > min(height, width):
                raise GeometryError(f"cyclic window size {self.size} exceeds image {height}x{width}")


@dataclass(frozen=True)
class Translation:
    """Signed integer shift (dx right, dy down) in realistic or cyclic mode."""

    dx: int
    dy: int
    mode: str = REALISTIC

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _parse_pnm(data: bytes, path) -> ImageBuf:
    magic = data[:2]
    channels = {b"P5": 1, b"P6": 3}[magic]
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ImageFormatError(f"{path}: truncated header")
        c = data[pos:pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ImageFormatError(f"{path}: unterminated comment")
            pos = nl + 1
        elif c.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
        else:
            raise ImageFormatError(f"{path}: bad header byte {c!r}")
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported bit depth (maxval {maxval}, want 255)")
    if width < 1 or height < 1 or width * height * channels > MAX_SAMPLES:
        raise ImageFormatError(f"{path}: bad dimensions {width}x{height}")
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise ImageFormatError(f"{path}: missing whitespace after maxval")
    pos += 1
    n = width * height * channels
    payload = data[pos:pos + n]
    if len(payload) != n:
        raise ImageFormatError(f"{path}: payload has {len(payload)} bytes, want {n}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuf(arr)


def _load_png(path) -> ImageBuf:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r} (want 8-bit L or RGB)")
    if arr.size > MAX_SAMPLES:
        raise ImageFormatError(f"{path}: image too large")
    return ImageBuf(arr)


def load_image(path) -> ImageBuf:
    """Decode a binary PGM (P5), binary PPM (P6), or 8-bit gray/RGB PNG file.

    PGM/PPM decoding is a direct byte copy (bit-exact, maxval 255 only).
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ImageFormatError(f"{path}: unreadable ({e})") from e
    if data[:2] in (b"P5", b"P6"):
        return _parse_pnm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise ImageFormatError(f"{path}: unsupported format (want P5/P6 PNM or PNG)")


def save_pnm(img: PixelSource, path) -> None:
    """Write a LumaPlane/gray image as binary PGM, or an RGB image as binary PPM.

    Output bytes are a pure function of the pixels (stable across runs).
    """
    if isinstance(img, LumaPlane):
        arr = img.values[:, :, None]
    else:
        arr = img.pixels
    h, w, c = arr.shape
    magic = b"P5" if c == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(arr.tobytes())


# ---------------------------------------------------------------------------
# Luminance
# ---------------------------------------------------------------------------

def to_luminance(img: ImageBuf) -> LumaPlane:
    """Convert to a single luminance plane.

    Gray input is copied unchanged. RGB uses integer Rec.601 weights with
    round-half-up: ``L = (299*R + 587*G + 114*B + 500) // 1000``, which is
    bit-exact across platforms.
    """
    if img.channels == 1:
        return LumaPlane(img.pixels[:, :, 0])
    px = img.pixels.astype(np.int32)
    luma = (299 * px[:, :, 0] + 587 * px[:, :, 1] + 114 * px[:, :, 2] + 500) // 1000
    return LumaPlane(luma.astype(np.uint8))


# ---------------------------------------------------------------------------
# Crop / translation geometry
# ---------------------------------------------------------------------------

def _plane_of(src: PixelSource) -> np.ndarray:
    return src.values if isinstance(src, LumaPlane) else src.pixels


def _rewrap(src: PixelSource, arr: np.ndarray) -> PixelSource:
    return LumaPlane(arr) if isinstance(src, LumaPlane) else ImageBuf(arr)


def extract_crop(src: PixelSource, window: CropWindow) -> PixelSource:
    """Extract the k-by-k crop described by ``window`` (same container kind).

    Realistic windows slice a contiguous block. Cyclic windows sample
    ``((top+r) mod H, (left+c) mod W)``, i.e. the top-left block after
    cyclically translating the image so (top, left) sits at the origin.
    """
    arr = _plane_of(src)
    h, w = arr.shape[0], arr.shape[1]
    window.validate_for(h, w)
    k = window.size
    if window.mode == REALISTIC:
        out = arr[window.top:window.top + k, window.left:window.left + k]
    else:
        rows = (window.top + np.arange(k)) % h
        cols = (window.left + np.arange(k)) % w
        out = arr[np.ix_(rows, cols)]
    return _rewrap(src, np.ascontiguousarray(out))


def cyclic_shift(img: PixelSource, dy: int, dx: int) -> PixelSource:
    """Circularly shift content by (dy, dx): content moves up-left for positive shifts,
    matching a camera view moving down-right."""
    arr = _plane_of(img)
    out = np.roll(np.roll(arr, -dy, axis=0), -dx, axis=1)
    return _rewrap(img, out)


def view_origin(source_h: int, source_w: int, view_size: int, t: Translation) -> tuple[int, int]:
    """Top-left of the translated view window inside the source (realistic mode)."""
    base_r = (source_h - view_size) // 2
    base_c = (source_w - view_size) // 2
    top, left = base_r + t.dy, base_c + t.dx
    if not (0 <= top <= source_h - view_size and 0 <= left <= source_w - view_size):
        raise GeometryError(
            f"shift (dx={t.dx}, dy={t.dy}) pushes {view_size}px view outside "
            f"{source_h}x{source_w} source"
        )
    return top, left


def translate_view(source: ImageBuf, view_size: int, t: Translation) -> ImageBuf:
    """Produce the translated field of view: the T(I, delta) of the benchmark.

    Realistic: an m-by-m window over the larger source, centered for
    ``t == 0`` (base offset ``(N-m)//2``) and moved by (dy, dx). Cyclic:
    requires ``m == N`` and circularly shifts the whole image.
    """
    if t.mode == REALISTIC:
        if view_size > min(source.height, source.width):
            raise GeometryError(f"view {view_size} larger than source")
        top, left = view_origin(source.height, source.width, view_size, t)
        return extract_crop(source, CropWindow(top, left, view_size, REALISTIC))
    if view_size != source.height or view_size != source.width:
        raise GeometryError("cyclic translation requires view size == source size")
    return cyclic_shift(source, t.dy, t.dx)
