"""Frame containers, mask application and the hybrid lossy/lossless codec.

Color frames travel as baseline JPEG (lossy, quality 95 by default) and
depth frames as 16-bit grayscale PNG (lossless, zlib level 2 by default).
Depth must roundtrip bit-exactly: localization accuracy depends on it.
Both codecs delegate to OpenCV and emit standard byte streams any
conforming decoder can read.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import CodecError, ContractViolation
from .geometry import Intrinsics

DEFAULT_JPEG_QUALITY = 95
DEFAULT_PNG_LEVEL = 2
DEFAULT_PAIR_SKEW_NS = 10_000_000  # 10 ms

_SUBSAMPLING = {
    "420": cv2.IMWRITE_JPEG_SAMPLING_FACTOR_420,
    "422": cv2.IMWRITE_JPEG_SAMPLING_FACTOR_422,
    "444": cv2.IMWRITE_JPEG_SAMPLING_FACTOR_444,
}


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ColorFrame:
    """8-bit RGB image; timestamp is monotonic-clock nanoseconds at capture."""

    pixels: np.ndarray  # (height, width, 3) uint8
    timestamp: int = 0

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ContractViolation(f"color pixels must be (h, w, 3) uint8, got {p.shape} {p.dtype}")
        object.__setattr__(self, "pixels", _freeze(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class DepthFrame:
    """Z16 depth image; value 0 means "no measurement"."""

    values: np.ndarray  # (height, width) uint16
    timestamp: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.dtype != np.uint16:
            raise ContractViolation(f"depth values must be (h, w) uint16, got {v.shape} {v.dtype}")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SegMask:
    """Per-pixel boolean object mask with its class label and confidence."""

    bits: np.ndarray  # (height, width) bool
    class_label: str = ""
    score: float = 1.0

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.dtype != np.bool_:
            raise ContractViolation(f"mask bits must be (h, w) bool, got {b.shape} {b.dtype}")
        if not (0.0 <= self.score <= 1.0):
            raise ContractViolation(f"score must be in [0, 1], got {self.score}")
        object.__setattr__(self, "bits", _freeze(b))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class FramePair:
    """One synchronized color+depth capture; the unit of transport."""

    color: ColorFrame
    depth: DepthFrame
    intrinsics: Intrinsics
    sequence: int = 0
    max_skew_ns: int = field(default=DEFAULT_PAIR_SKEW_NS, repr=False)

    def __post_init__(self):
        if (self.color.width, self.color.height) != (self.depth.width, self.depth.height):
            raise ContractViolation(
                f"color {self.color.width}x{self.color.height} and depth "
                f"{self.depth.width}x{self.depth.height} dimensions differ"
            )
        skew = abs(self.color.timestamp - self.depth.timestamp)
        if skew > self.max_skew_ns:
            raise ContractViolation(f"color/depth timestamp skew {skew} ns exceeds {self.max_skew_ns} ns")


def apply_mask(c: ColorFrame, m: SegMask) -> ColorFrame:
    """Black out every pixel where the mask is false; masked-true pixels pass through.

    A scene pixel that is already exactly (0, 0, 0) becomes indistinguishable
    from a masked-out pixel downstream; the cloud builder drops both.
    """
    if (m.width, m.height) != (c.width, c.height):
        raise ContractViolation(
            f"mask {m.width}x{m.height} does not match frame {c.width}x{c.height}"
        )
    out = np.where(m.bits[:, :, None], c.pixels, np.uint8(0))
    return ColorFrame(out, timestamp=c.timestamp)


def encode_color(c: ColorFrame, quality: int = DEFAULT_JPEG_QUALITY, subsampling: str = "420") -> bytes:
    """Encode to a baseline JPEG byte stream.

    Chroma subsampling defaults to 4:2:0; pass "444" when chroma fidelity
    matters more than size.
    """
    if not (1 <= quality <= 100):
        raise ContractViolation(f"JPEG quality must be in [1, 100], got {quality}")
    if subsampling not in _SUBSAMPLING:
        raise ContractViolation(f"unknown subsampling {subsampling!r}, want one of {sorted(_SUBSAMPLING)}")
    params = [
        cv2.IMWRITE_JPEG_QUALITY, quality,
        cv2.IMWRITE_JPEG_SAMPLING_FACTOR, _SUBSAMPLING[subsampling],
    ]
    ok, buf = cv2.imencode(".jpg", cv2.cvtColor(c.pixels, cv2.COLOR_RGB2BGR), params)
    if not ok:
        raise CodecError("color", "JPEG encoder failed")
    return buf.tobytes()


def decode_color(data: bytes, timestamp: int = 0) -> ColorFrame:
    """Decode a JPEG byte stream; dimensions come from the stream header."""
    arr = np.frombuffer(data, dtype=np.uint8)
    img = cv2.imdecode(arr, cv2.IMREAD_COLOR)
    if img is None:
        raise CodecError("color", "malformed JPEG stream")
    return ColorFrame(cv2.cvtColor(img, cv2.COLOR_BGR2RGB), timestamp=timestamp)


def encode_depth(d: DepthFrame, level: int = DEFAULT_PNG_LEVEL) -> bytes:
    """Encode to a 16-bit grayscale PNG byte stream; decode is a bit-exact inverse."""
    if not (0 <= level <= 9):
        raise ContractViolation(f"PNG compression level must be in [0, 9], got {level}")
    ok, buf = cv2.imencode(".png", d.values, [cv2.IMWRITE_PNG_COMPRESSION, level])
    if not ok:
        raise CodecError("depth", "PNG encoder failed")
    return buf.tobytes()


def decode_depth(data: bytes, timestamp: int = 0) -> DepthFrame:
    """Decode a 16-bit grayscale PNG byte stream."""
    arr = np.frombuffer(data, dtype=np.uint8)
    img = cv2.imdecode(arr, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise CodecError("depth", "malformed PNG stream")
    if img.ndim != 2 or img.dtype != np.uint16:
        raise CodecError("depth", f"expected 16-bit grayscale PNG, got {img.dtype} ndim={img.ndim}")
    return DepthFrame(img, timestamp=timestamp)


def psnr(a: ColorFrame | np.ndarray, b: ColorFrame | np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two 8-bit images; inf for identical."""
    pa = a.pixels if isinstance(a, ColorFrame) else np.asarray(a)
    pb = b.pixels if isinstance(b, ColorFrame) else np.asarray(b)
    if pa.shape != pb.shape:
        raise ContractViolation(f"shape mismatch {pa.shape} vs {pb.shape}")
    mse = np.mean((pa.astype(np.float64) - pb.astype(np.float64)) ** 2)
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)
