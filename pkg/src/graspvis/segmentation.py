"""Instance-segmentation providers and the detection wire schema.

Two interchangeable mask sources: a ground-truth provider backed by the
renderer's object-ID images (for repeatable evaluation) and a remote
provider that ships JPEG frames to a segmentation service and decodes
the reply. Both yield `Detection` lists in emission order; the first
detection surviving the config filter is the grasp target.

The wire layout for requests and replies lives here so the service and
the client cannot drift apart. All integers little-endian:

  request:  u32 jpeg_len, jpeg bytes, u32 cfg_len, cfg JSON (utf-8)
  reply:    u32 width, u32 height, u32 count, then per detection
            u16 label_len, label utf-8, f64 score,
            u32 run_count, run_count * u32 mask run lengths

Mask runs are row-major RLE alternating false/true and starting with
false (a leading zero run means the mask begins with a true pixel).
Run lengths must sum to width*height.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ProtocolError
from .imaging import ColorFrame, SegMask, encode_color
from .transport import RequestClient

DEFAULT_MIN_SCORE = 0.5
DEFAULT_REQUEST_TIMEOUT = 5.0

_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_F64 = struct.Struct("<d")


@dataclass(frozen=True)
class Detection:
    mask: SegMask
    bbox: tuple[int, int, int, int]  # (u0, v0, u1, v1), half-open

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (0 <= u0 <= u1 <= self.mask.width and 0 <= v0 <= v1 <= self.mask.height):
            raise ContractViolation("bbox out of mask bounds")

    @property
    def class_label(self) -> str:
        return self.mask.class_label

    @property
    def score(self) -> float:
        return self.mask.score

    @classmethod
    def from_mask(cls, mask: SegMask) -> "Detection":
        return cls(mask=mask, bbox=mask_bbox(mask.bits))


def mask_bbox(bits: np.ndarray) -> tuple[int, int, int, int]:
    """Tight half-open bounding box of the true pixels; all-zero for an empty mask."""
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        return (0, 0, 0, 0)
    return (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "ground_truth"  # or "remote"
    endpoint: str | None = None
    target_classes: tuple[str, ...] = ()
    min_score: float = DEFAULT_MIN_SCORE
    timeout: float = DEFAULT_REQUEST_TIMEOUT
    jpeg_quality: int = 95

    def __post_init__(self):
        if self.kind not in ("ground_truth", "remote"):
            raise ContractViolation(f"unknown provider kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ContractViolation("remote provider needs an endpoint")
        if not 0.0 <= self.min_score <= 1.0:
            raise ContractViolation("min_score must lie in [0, 1]")


class GroundTruthProvider:
    """Serves exact masks for frames the caller has registered truth for.

    Frames are keyed by their color timestamp, so evaluation loops must
    stamp each rendered frame uniquely.
    """

    def __init__(self):
        self._truth = {}

    def register(self, frame: ColorFrame, truth) -> None:
        self._truth[frame.timestamp] = truth

    def detect(self, frame: ColorFrame) -> list[Detection]:
        truth = self._truth.get(frame.timestamp)
        if truth is None:
            raise ContractViolation(
                f"no ground truth registered for frame timestamp {frame.timestamp}"
            )
        out = []
        for k in range(len(truth.labels)):
            mask = truth.mask_for(k)
            if mask.bits.any():
                out.append(Detection.from_mask(mask))
        return out


class RemoteDetectionProvider:
    """Forwards frames to a segmentation service over request-reply.

    Holds one connection open across calls; a transport failure resets
    it so the next call reconnects.
    """

    def __init__(self, endpoint: str, timeout: float = DEFAULT_REQUEST_TIMEOUT,
                 jpeg_quality: int = 95, min_score: float = 0.0):
        self._client = RequestClient(endpoint, timeout=timeout)
        self._quality = jpeg_quality
        self._min_score = min_score

    def detect(self, frame: ColorFrame) -> list[Detection]:
        request = encode_detect_request(encode_color(frame, quality=self._quality), self._min_score)
        reply = self._client.request(request)
        width, height, detections = decode_detections(reply)
        if (width, height) != (frame.width, frame.height):
            raise ProtocolError(
                f"reply geometry {width}x{height} does not match frame {frame.width}x{frame.height}"
            )
        return detections

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_provider(config: ProviderConfig, registry: GroundTruthProvider | None = None):
    if config.kind == "remote":
        return RemoteDetectionProvider(
            config.endpoint, timeout=config.timeout,
            jpeg_quality=config.jpeg_quality, min_score=config.min_score,
        )
    return registry if registry is not None else GroundTruthProvider()


def detect(frame: ColorFrame, config: ProviderConfig, provider) -> list[Detection]:
    """Run the provider and apply the class/score filter, preserving order."""
    out = []
    for det in provider.detect(frame):
        if config.target_classes and det.class_label not in config.target_classes:
            continue
        if det.score < config.min_score:
            continue
        out.append(det)
    return out


def encode_mask_runs(bits: np.ndarray) -> np.ndarray:
    """Row-major RLE, alternating false/true starting with false."""
    flat = np.asarray(bits, bool).ravel()
    if flat.size == 0:
        raise ContractViolation("cannot run-length encode an empty mask")
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate([[0], runs])
    return runs.astype(np.int64)


def runs_to_mask(runs: np.ndarray, width: int, height: int) -> np.ndarray:
    runs = np.asarray(runs, np.int64)
    if runs.size and runs.min() < 0:
        raise ProtocolError("negative run length")
    if int(runs.sum()) != width * height:
        raise ProtocolError(
            f"mask runs sum to {int(runs.sum())}, expected {width * height}"
        )
    flat = np.zeros(width * height, bool)
    ends = np.cumsum(runs)
    starts = ends - runs
    for k in range(1, len(runs), 2):
        flat[starts[k]:ends[k]] = True
    return flat.reshape(height, width)


def encode_detect_request(jpeg_bytes: bytes, min_score: float = 0.0) -> bytes:
    cfg = json.dumps({"min_score": float(min_score)}, sort_keys=True).encode("utf-8")
    return _U32.pack(len(jpeg_bytes)) + jpeg_bytes + _U32.pack(len(cfg)) + cfg


def decode_detect_request(data: bytes) -> tuple[bytes, dict]:
    jpeg, offset = _take_block(data, 0, "request jpeg")
    cfg_raw, offset = _take_block(data, offset, "request config")
    if offset != len(data):
        raise ProtocolError(f"{len(data) - offset} trailing bytes after request")
    try:
        cfg = json.loads(cfg_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"request config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ProtocolError("request config must be a JSON object")
    return jpeg, cfg


def encode_detections(detections, width: int, height: int) -> bytes:
    out = bytearray(struct.pack("<III", width, height, len(detections)))
    for det in detections:
        if det.mask.bits.shape != (height, width):
            raise ContractViolation("detection mask does not match reply geometry")
        label = det.class_label.encode("utf-8")
        if len(label) > 0xFFFF:
            raise ContractViolation("class label too long to encode")
        runs = encode_mask_runs(det.mask.bits)
        out += _U16.pack(len(label)) + label
        out += _F64.pack(float(det.score))
        out += _U32.pack(len(runs)) + runs.astype("<u4").tobytes()
    return bytes(out)


def decode_detections(data: bytes) -> tuple[int, int, list[Detection]]:
    if len(data) < 12:
        raise ProtocolError("detection reply shorter than its header")
    width, height, count = struct.unpack_from("<III", data, 0)
    if width == 0 or height == 0:
        raise ProtocolError("detection reply has zero geometry")
    offset = 12
    detections = []
    for _ in range(count):
        label_len, offset = _need(data, offset, _U16, "label length")
        label_raw = data[offset:offset + label_len]
        if len(label_raw) != label_len:
            raise ProtocolError("truncated class label")
        offset += label_len
        try:
            label = label_raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("class label is not valid utf-8") from exc
        score, offset = _need(data, offset, _F64, "score")
        if not 0.0 <= score <= 1.0:
            raise ProtocolError(f"score {score!r} outside [0, 1]")
        run_count, offset = _need(data, offset, _U32, "run count")
        end = offset + 4 * run_count
        if end > len(data):
            raise ProtocolError("truncated mask runs")
        runs = np.frombuffer(data, dtype="<u4", count=run_count, offset=offset).astype(np.int64)
        offset = end
        bits = runs_to_mask(runs, width, height)
        detections.append(Detection.from_mask(SegMask(bits, class_label=label, score=float(score))))
    if offset != len(data):
        raise ProtocolError(f"{len(data) - offset} trailing bytes after detections")
    return width, height, detections


def _take_block(data: bytes, offset: int, what: str) -> tuple[bytes, int]:
    length, offset = _need(data, offset, _U32, f"{what} length")
    block = data[offset:offset + length]
    if len(block) != length:
        raise ProtocolError(f"truncated {what}")
    return block, offset + length


def _need(data: bytes, offset: int, fmt: struct.Struct, what: str):
    if offset + fmt.size > len(data):
        raise ProtocolError(f"truncated {what}")
    (value,) = fmt.unpack_from(data, offset)
    return value, offset + fmt.size
