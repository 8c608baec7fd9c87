"""Request-reply frame transport over TCP.

The flying platform cannot afford a stale frame: the consumer always
wants the newest capture, never a queue of old ones. A request-reply
exchange gives that for free, the reply is produced at request time
from a single-slot mailbox holding the latest encoded frame, and
anything older is simply dropped.

Message framing (all integers little-endian):

  request:  u32 length, payload bytes
  reply:    u32 length, u8 status (0 ok, 1 error), payload bytes
            (length counts the status byte plus the payload)

An error reply carries a utf-8 message and surfaces as `RemoteError`.
A request timeout resets the connection and raises `StaleFrameError`;
the next request reconnects.

Frame payloads use a fixed little-endian header followed by three
length-prefixed blobs:

  offset  size  field
       0     4  magic "RGBD"
       4     2  u16 version (currently 1)
       6     8  u64 sequence, strictly increasing per publisher
      14     8  u64 capture timestamp, ns
      22     8  u64 sent timestamp, ns (stamped at reply time)
      30     4  u32 intrinsics JSON length
      34     4  u32 color payload length (JPEG)
      38     4  u32 depth payload length (PNG, 16-bit grayscale)
      42        intrinsics JSON, color payload, depth payload
"""

from __future__ import annotations

import csv
import socket
import struct
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import (
    ContractViolation,
    ProtocolError,
    RemoteError,
    StaleFrameError,
    TransportError,
)
from .geometry import Intrinsics
from .imaging import (
    DEFAULT_JPEG_QUALITY,
    DEFAULT_PNG_LEVEL,
    FramePair,
    decode_color,
    decode_depth,
    encode_color,
    encode_depth,
)

DEFAULT_TIMEOUT = 5.0
STATUS_OK = 0
STATUS_ERROR = 1

_LEN = struct.Struct("<I")
_MAX_MESSAGE = 64 * 1024 * 1024  # refuse anything bigger than 64 MiB
_WIRE_MAGIC = b"RGBD"
_WIRE_VERSION = 1
_WIRE_HEADER = struct.Struct("<4sHQQQIII")


class ServiceShutdown(Exception):
    """Raised by a server handler to send one error reply and stop serving."""


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    if not endpoint.startswith("tcp://"):
        raise ContractViolation(f"endpoint must look like tcp://host:port, got {endpoint!r}")
    host, sep, port = endpoint[len("tcp://"):].rpartition(":")
    if not sep or not host:
        raise ContractViolation(f"endpoint must look like tcp://host:port, got {endpoint!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ContractViolation(f"endpoint port {port!r} is not an integer") from None
    if not 0 <= port_num <= 65535:
        raise ContractViolation(f"endpoint port {port_num} out of range")
    return host, port_num


def _recv_exact(sock: socket.socket, n: int, stop: threading.Event | None = None) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a message boundary.

    With a stop event set, idle timeouts abort; a timeout mid-message
    keeps waiting so a slow sender is not corrupted into a short read.
    """
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            if stop is None:
                raise
            if stop.is_set():
                raise TransportError("server stopping") from None
            continue
        if not chunk:
            if not buf:
                return None
            raise TransportError(f"connection closed {len(buf)}/{n} bytes into a message")
        buf += chunk
    return bytes(buf)


def _recv_message(sock: socket.socket, stop: threading.Event | None = None) -> bytes | None:
    raw = _recv_exact(sock, _LEN.size, stop)
    if raw is None:
        return None
    (length,) = _LEN.unpack(raw)
    if length > _MAX_MESSAGE:
        raise TransportError(f"refusing {length}-byte message (cap {_MAX_MESSAGE})")
    if length == 0:
        return b""
    body = _recv_exact(sock, length, stop)
    if body is None:
        raise TransportError("connection closed between header and body")
    return body


def _send_message(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(_LEN.pack(len(payload)) + payload)


class RequestClient:
    """One lazy persistent connection; request() resets it on any failure."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        if timeout <= 0:
            raise ContractViolation("timeout must be positive")
        self._address = parse_endpoint(endpoint)
        self.endpoint = endpoint
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def request(self, payload: bytes) -> bytes:
        try:
            if self._sock is None:
                self._sock = socket.create_connection(self._address, timeout=self.timeout)
                self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._sock.settimeout(self.timeout)
            _send_message(self._sock, payload)
            reply = _recv_message(self._sock)
        except socket.timeout as exc:
            self.close()
            raise StaleFrameError(
                f"no reply from {self.endpoint} within {self.timeout:.3g}s; channel reset"
            ) from exc
        except OSError as exc:
            self.close()
            raise TransportError(f"request to {self.endpoint} failed: {exc}") from exc
        except TransportError:
            self.close()
            raise
        if reply is None:
            self.close()
            raise TransportError(f"{self.endpoint} closed the connection before replying")
        if not reply:
            self.close()
            raise ProtocolError("reply missing its status byte")
        status, body = reply[0], reply[1:]
        if status == STATUS_ERROR:
            raise RemoteError(body.decode("utf-8", errors="replace"))
        if status != STATUS_OK:
            self.close()
            raise ProtocolError(f"unknown reply status {status}")
        return body

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ReplyServer:
    """Single-threaded request-reply server for one client at a time.

    Handler exceptions become error replies; `ServiceShutdown` sends one
    error reply and then stops the server. Binding happens at
    construction so port 0 resolves immediately (see `endpoint`).
    """

    def __init__(self, endpoint: str, handler: Callable[[bytes], bytes]):
        host, port = parse_endpoint(endpoint)
        self._handler = handler
        self._stop = threading.Event()
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.1)
        self.endpoint = f"tcp://{host}:{self._listener.getsockname()[1]}"
        self._thread: threading.Thread | None = None

    def start(self) -> "ReplyServer":
        if self._thread is not None:
            raise ContractViolation("server already started")
        self._thread = threading.Thread(target=self._serve, name="reply-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self._listener.close()

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                conn.settimeout(0.5)
                self._serve_connection(conn)

    def _serve_connection(self, conn: socket.socket) -> None:
        while not self._stop.is_set():
            try:
                request = _recv_message(conn, self._stop)
            except TransportError:
                return
            if request is None:
                return
            shutdown = False
            try:
                reply = bytes([STATUS_OK]) + self._handler(request)
            except ServiceShutdown as exc:
                reply = bytes([STATUS_ERROR]) + str(exc).encode("utf-8")
                shutdown = True
            except Exception as exc:
                reply = bytes([STATUS_ERROR]) + f"{type(exc).__name__}: {exc}".encode("utf-8")
            try:
                _send_message(conn, reply)
            except OSError:
                return
            if shutdown:
                self._stop.set()
                return

    def __enter__(self):
        # factories hand out already-running servers; entering one of
        # those must not trip the double-start guard
        if not self.running:
            self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


@dataclass(frozen=True)
class WireFramePair:
    """One encoded frame pair plus the metadata needed to decode and time it."""

    sequence: int
    capture_timestamp: int
    sent_timestamp: int
    intrinsics_json: bytes
    color_payload: bytes
    depth_payload: bytes

    def __post_init__(self):
        for name in ("sequence", "capture_timestamp", "sent_timestamp"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be nonnegative")
        if not self.intrinsics_json or not self.color_payload or not self.depth_payload:
            raise ContractViolation("wire frame payloads must be nonempty")


def encode_wire_frame_pair(wire: WireFramePair) -> bytes:
    header = _WIRE_HEADER.pack(
        _WIRE_MAGIC,
        _WIRE_VERSION,
        wire.sequence,
        wire.capture_timestamp,
        wire.sent_timestamp,
        len(wire.intrinsics_json),
        len(wire.color_payload),
        len(wire.depth_payload),
    )
    return header + wire.intrinsics_json + wire.color_payload + wire.depth_payload


def decode_wire_frame_pair(data: bytes) -> WireFramePair:
    if len(data) < _WIRE_HEADER.size:
        raise ProtocolError(f"frame message is {len(data)} bytes, header needs {_WIRE_HEADER.size}")
    magic, version, sequence, capture_ts, sent_ts, n_intr, n_color, n_depth = _WIRE_HEADER.unpack_from(data, 0)
    if magic != _WIRE_MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != _WIRE_VERSION:
        raise ProtocolError(f"unsupported frame version {version}")
    expected = _WIRE_HEADER.size + n_intr + n_color + n_depth
    if len(data) != expected:
        raise ProtocolError(f"frame message is {len(data)} bytes, lengths say {expected}")
    offset = _WIRE_HEADER.size
    intrinsics_json = data[offset:offset + n_intr]
    offset += n_intr
    color = data[offset:offset + n_color]
    offset += n_color
    depth = data[offset:]
    return WireFramePair(
        sequence=sequence,
        capture_timestamp=capture_ts,
        sent_timestamp=sent_ts,
        intrinsics_json=intrinsics_json,
        color_payload=color,
        depth_payload=depth,
    )


def wire_from_pair(
    pair: FramePair,
    jpeg_quality: int = DEFAULT_JPEG_QUALITY,
    png_level: int = DEFAULT_PNG_LEVEL,
    sequence: int | None = None,
    sent_timestamp: int = 0,
) -> WireFramePair:
    """Encode both frames; color is lossy JPEG, depth roundtrips exactly."""
    return WireFramePair(
        sequence=pair.sequence if sequence is None else sequence,
        capture_timestamp=pair.color.timestamp,
        sent_timestamp=sent_timestamp,
        intrinsics_json=pair.intrinsics.to_json().encode("utf-8"),
        color_payload=encode_color(pair.color, quality=jpeg_quality),
        depth_payload=encode_depth(pair.depth, level=png_level),
    )


def pair_from_wire(wire: WireFramePair) -> FramePair:
    try:
        intrinsics = Intrinsics.from_json(wire.intrinsics_json.decode("utf-8"))
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"bad intrinsics JSON: {exc}") from exc
    color = decode_color(wire.color_payload, timestamp=wire.capture_timestamp)
    depth = decode_depth(wire.depth_payload, timestamp=wire.capture_timestamp)
    return FramePair(color=color, depth=depth, intrinsics=intrinsics, sequence=wire.sequence)


class FramePublisher:
    """Serves the newest frame from a source iterable over request-reply.

    A producer thread drains the source and keeps only the latest encoded
    frame; each reply re-stamps `sent_timestamp` and never repeats a
    sequence, so a consumer polling faster than the source produces will
    block until a genuinely fresh frame exists. Source exhaustion or
    failure turns into one error reply and a server shutdown.

    `fault_hook(request_index)` runs before each reply; letting it raise
    is the hook for failure-injection tests.
    """

    def __init__(
        self,
        frames: Iterable[FramePair],
        endpoint: str = "tcp://127.0.0.1:0",
        jpeg_quality: int = DEFAULT_JPEG_QUALITY,
        png_level: int = DEFAULT_PNG_LEVEL,
        start_sequence: int = 0,
        reply_timeout: float = 10.0,
        fault_hook: Callable[[int], None] | None = None,
        clock: Callable[[], int] = time.time_ns,
    ):
        if reply_timeout <= 0:
            raise ContractViolation("reply_timeout must be positive")
        self._frames = iter(frames)
        self._quality = jpeg_quality
        self._png_level = png_level
        self._next_sequence = start_sequence
        self._reply_timeout = reply_timeout
        self._fault_hook = fault_hook
        self._clock = clock
        self._cond = threading.Condition()
        self._slot: WireFramePair | None = None
        self._last_replied = start_sequence - 1
        self._source_done = False
        self._source_error: Exception | None = None
        self._request_index = 0
        self._producer: threading.Thread | None = None
        self._server = ReplyServer(endpoint, self._handle)
        self.endpoint = self._server.endpoint

    def start(self) -> "FramePublisher":
        self._server.start()
        self._producer = threading.Thread(target=self._produce, name="frame-producer", daemon=True)
        self._producer.start()
        return self

    def stop(self) -> None:
        self._server.stop()
        with self._cond:
            self._source_done = True
            self._cond.notify_all()
        # wait out the producer: letting it die mid-encode inside the
        # codec at interpreter exit aborts the process
        if self._producer is not None:
            self._producer.join(timeout=5.0)
            self._producer = None

    @property
    def running(self) -> bool:
        return self._server.running

    def _produce(self) -> None:
        try:
            for pair in self._frames:
                with self._cond:
                    if self._source_done:
                        return
                wire = wire_from_pair(
                    pair,
                    jpeg_quality=self._quality,
                    png_level=self._png_level,
                    sequence=self._next_sequence,
                )
                with self._cond:
                    if self._source_done:
                        return
                    self._slot = wire
                    self._next_sequence += 1
                    self._cond.notify_all()
        except Exception as exc:
            with self._cond:
                self._source_error = exc
                self._cond.notify_all()
        else:
            with self._cond:
                self._source_done = True
                self._cond.notify_all()

    def _handle(self, request: bytes) -> bytes:
        index = self._request_index
        self._request_index += 1
        if self._fault_hook is not None:
            self._fault_hook(index)
        deadline = time.monotonic() + self._reply_timeout
        with self._cond:
            while True:
                if self._source_error is not None:
                    raise ServiceShutdown(f"camera source failed: {self._source_error}")
                if self._slot is not None and self._slot.sequence > self._last_replied:
                    break
                if self._source_done:
                    raise ServiceShutdown("camera source exhausted")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(
                        f"no frame fresher than sequence {self._last_replied} "
                        f"within {self._reply_timeout:.3g}s"
                    )
                self._cond.wait(remaining)
            wire = replace(self._slot, sent_timestamp=self._clock())
            self._last_replied = wire.sequence
        return encode_wire_frame_pair(wire)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()


class FrameClient:
    """Requests frames and enforces strictly increasing sequences."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self._client = RequestClient(endpoint, timeout=timeout)
        self._last_sequence = -1

    def request_frame(self) -> WireFramePair:
        wire = decode_wire_frame_pair(self._client.request(b"frame"))
        if wire.sequence <= self._last_sequence:
            raise ProtocolError(
                f"sequence went backwards: {wire.sequence} after {self._last_sequence}"
            )
        self._last_sequence = wire.sequence
        return wire

    def request_pair(self) -> FramePair:
        return pair_from_wire(self.request_frame())

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def request_frame(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> WireFramePair:
    """One-shot frame fetch on a fresh connection."""
    with FrameClient(endpoint, timeout=timeout) as client:
        return client.request_frame()


@dataclass(frozen=True)
class TransitRecord:
    index: int
    sequence: int
    latency_ms: float
    color_bytes: int
    depth_bytes: int


@dataclass(frozen=True)
class TransitSummary:
    count: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float


@dataclass(frozen=True)
class TransitStudy:
    records: tuple[TransitRecord, ...]
    summary: TransitSummary

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "sequence", "latency_ms", "color_bytes", "depth_bytes"])
            for r in self.records:
                writer.writerow([r.index, r.sequence, f"{r.latency_ms:.6f}", r.color_bytes, r.depth_bytes])


def load_transit_csv(path) -> TransitStudy:
    records = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                TransitRecord(
                    index=int(row["index"]),
                    sequence=int(row["sequence"]),
                    latency_ms=float(row["latency_ms"]),
                    color_bytes=int(row["color_bytes"]),
                    depth_bytes=int(row["depth_bytes"]),
                )
            )
    return TransitStudy(records=tuple(records), summary=summarize_transit(records))


def summarize_transit(records) -> TransitSummary:
    if not records:
        return TransitSummary(count=0, mean_ms=float("nan"), p50_ms=float("nan"),
                              p95_ms=float("nan"), p99_ms=float("nan"))
    lat = np.array([r.latency_ms for r in records])
    p50, p95, p99 = np.percentile(lat, [50, 95, 99])
    return TransitSummary(
        count=len(records),
        mean_ms=float(lat.mean()),
        p50_ms=float(p50),
        p95_ms=float(p95),
        p99_ms=float(p99),
    )


def measure_transit(endpoint: str, count: int, timeout: float = DEFAULT_TIMEOUT,
                    warmup: int = 1) -> TransitStudy:
    """Time request-to-decoded-pair latency over `count` frame fetches.

    The clock starts when the request is sent and stops when both frames
    of the reply are fully decoded. Warmup fetches prime the connection
    and are discarded.
    """
    if count < 1:
        raise ContractViolation("count must be at least 1")
    records = []
    with FrameClient(endpoint, timeout=timeout) as client:
        for _ in range(warmup):
            client.request_frame()
        for index in range(count):
            started = time.perf_counter_ns()
            wire = client.request_frame()
            pair_from_wire(wire)
            elapsed_ms = (time.perf_counter_ns() - started) / 1e6
            records.append(
                TransitRecord(
                    index=index,
                    sequence=wire.sequence,
                    latency_ms=elapsed_ms,
                    color_bytes=len(wire.color_payload),
                    depth_bytes=len(wire.depth_payload),
                )
            )
    return TransitStudy(records=tuple(records), summary=summarize_transit(records))
