"""The request handler and server wiring.

The schema is owned by the primary package: requests and replies go
through graspvis.segmentation codecs verbatim, so whatever that side
accepts, this side speaks.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from graspvis import Detection, ReplyServer, SegMask, decode_color, parse_endpoint
from graspvis.segmentation import decode_detect_request, encode_detections

from .model import DEFAULT_MODEL, load_model

log = logging.getLogger("segserve")

DEFAULT_ENDPOINT = "tcp://127.0.0.1:5802"


@dataclass(frozen=True)
class ServeConfig:
    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    threshold: float = 0.5
    device: str = "cpu"

    def __post_init__(self):
        parse_endpoint(self.endpoint)
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")


class DetectionService:
    """Turns one detection request into one detection reply.

    The effective score floor for a request is the larger of the service
    threshold and the min_score the client sent, so neither side can
    lower the bar the other configured.
    """

    def __init__(self, model, threshold: float = 0.5):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
        self._model = model
        self._threshold = threshold

    def handle(self, request: bytes) -> bytes:
        start = time.perf_counter()
        jpeg, cfg = decode_detect_request(request)
        frame = decode_color(jpeg)
        floor = max(self._threshold, float(cfg.get("min_score", 0.0)))

        detections = []
        for label, score, mask in self._model(frame.pixels):
            if score < floor:
                continue
            detections.append(
                Detection.from_mask(SegMask(mask, class_label=label, score=score))
            )
        reply = encode_detections(detections, frame.width, frame.height)
        log.info(
            "%dx%d image -> %d detection(s) >= %.2f in %.1f ms",
            frame.width, frame.height, len(detections), floor,
            1000 * (time.perf_counter() - start),
        )
        return reply


def serve(config: ServeConfig, model=None) -> ReplyServer:
    """Start a server for the config; pass a model to skip loading one.

    Returns the running ReplyServer; stop() it or use it as a context
    manager. Malformed requests produce error replies and the server
    keeps serving.
    """
    if model is None:
        model = load_model(config.model, config.device)
    service = DetectionService(model, threshold=config.threshold)
    server = ReplyServer(config.endpoint, service.handle)
    server.start()
    log.info("serving %s on %s (threshold %.2f, %s)",
             config.model, server.endpoint, config.threshold, config.device)
    return server
