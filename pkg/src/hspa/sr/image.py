"""Image container and Netpbm (PGM/PPM, 8-bit) reading and writing."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# BT.601 luma weights; full-range YCbCr in [0, 1]
_LUMA = np.array([0.299, 0.587, 0.114])
_KB, _KR = 1.772, 1.402


class NetpbmError(ValueError):
    pass


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    y = rgb @ _LUMA
    cb = 0.5 + (rgb[..., 2] - y) / _KB
    cr = 0.5 + (rgb[..., 0] - y) / _KR
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 0.5, ycc[..., 2] - 0.5
    r = y + _KR * cr
    b = y + _KB * cb
    g = (y - _LUMA[0] * r - _LUMA[2] * b) / _LUMA[1]
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


@dataclass(frozen=True)
class Image:
    """Luma raster in [0, 1] with an optional RGB companion of the same size."""

    luma: np.ndarray
    rgb: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.luma, dtype=np.float64)
        if y.ndim != 2 or min(y.shape) < 1:
            raise ValueError(f"luma must be a non-empty 2-D array, got shape {y.shape}")
        if not np.all((y >= 0.0) & (y <= 1.0)):
            raise ValueError("luma samples must lie in [0, 1]")
        object.__setattr__(self, "luma", y)
        if self.rgb is not None:
            c = np.asarray(self.rgb, dtype=np.float64)
            if c.shape != y.shape + (3,):
                raise ValueError(f"rgb shape {c.shape} does not match luma {y.shape}")
            object.__setattr__(self, "rgb", c)

    @classmethod
    def from_rgb(cls, rgb) -> Image:
        rgb = np.asarray(rgb, dtype=np.float64)
        return cls(np.clip(rgb @ _LUMA, 0.0, 1.0), rgb)

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.luma.shape

    def crop_to_multiple(self, scale: int) -> Image:
        h = self.height - self.height % scale
        w = self.width - self.width % scale
        if h == 0 or w == 0:
            raise ValueError(f"image {self.shape} smaller than scale {scale}")
        rgb = None if self.rgb is None else self.rgb[:h, :w]
        return Image(self.luma[:h, :w], rgb)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _header(data: bytes, path) -> tuple[bytes, list[int], int]:
    pos = 0
    fields: list[bytes] = []
    while len(fields) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise NetpbmError(f"{path}: truncated header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r}")
    try:
        nums = [int(f) for f in fields[1:]]
    except ValueError as exc:
        raise NetpbmError(f"{path}: malformed header field") from exc
    w, h, maxval = nums
    if w < 1 or h < 1:
        raise NetpbmError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise NetpbmError(f"{path}: unsupported maxval {maxval} (only 255)")
    return magic, nums, pos


def decode_netpbm(data: bytes, path="<bytes>") -> np.ndarray:
    """8-bit samples as (H, W) for PGM or (H, W, 3) for PPM."""
    magic, (w, h, _), pos = _header(data, path)
    chans = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * chans
    if magic in (b"P5", b"P6"):
        # exactly one whitespace byte separates maxval from the raster
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise NetpbmError(f"{path}: missing separator before raster")
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) < count:
            raise NetpbmError(f"{path}: truncated payload ({len(raster)} of {count} bytes)")
        arr = np.frombuffer(raster, dtype=np.uint8)
    else:
        tokens = re.sub(rb"#[^\n]*", b" ", data[pos:]).split()
        if len(tokens) < count:
            raise NetpbmError(f"{path}: truncated payload ({len(tokens)} of {count} samples)")
        try:
            vals = np.array([int(t) for t in tokens[:count]])
        except ValueError as exc:
            raise NetpbmError(f"{path}: non-numeric sample") from exc
        if vals.min() < 0 or vals.max() > 255:
            raise NetpbmError(f"{path}: sample outside [0, 255]")
        arr = vals.astype(np.uint8)
    return arr.reshape((h, w, 3) if chans == 3 else (h, w)).copy()


def encode_netpbm(samples: np.ndarray, plain: bool = False) -> bytes:
    samples = np.asarray(samples, dtype=np.uint8)
    h, w = samples.shape[:2]
    rgb = samples.ndim == 3
    magic = {(False, False): b"P5", (True, False): b"P6", (False, True): b"P2", (True, True): b"P3"}[(rgb, plain)]
    head = magic + b"\n%d %d\n255\n" % (w, h)
    if not plain:
        return head + samples.tobytes()
    per_row = w * (3 if rgb else 1)
    lines = (" ".join(map(str, row)) for row in samples.reshape(h, per_row))
    return head + "\n".join(lines).encode() + b"\n"


def load_image(path) -> Image:
    """Read a PGM or PPM file; PPM luma uses BT.601 weights."""
    path = Path(path)
    samples = decode_netpbm(path.read_bytes(), path)
    if samples.ndim == 2:
        return Image(samples / 255.0)
    return Image.from_rgb(samples / 255.0)


def save_image(img: Image, path, plain: bool = False) -> Path:
    """Write ``.pgm`` (luma) or ``.ppm`` (RGB, or grey replicated) by suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        samples = _to_u8(img.luma)
    elif suffix == ".ppm":
        rgb = img.rgb if img.rgb is not None else np.repeat(img.luma[..., None], 3, axis=-1)
        samples = _to_u8(rgb)
    else:
        raise ValueError(f"{path}: expected a .pgm or .ppm suffix")
    path.write_bytes(encode_netpbm(samples, plain))
    return path
