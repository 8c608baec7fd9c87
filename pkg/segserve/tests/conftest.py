import json
from pathlib import Path

import cv2
import numpy as np
import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def bottle_rgb() -> np.ndarray:
    bgr = cv2.imread(str(FIXTURES / "bottle.png"), cv2.IMREAD_COLOR)
    assert bgr is not None
    return np.ascontiguousarray(bgr[:, :, ::-1])


@pytest.fixture(scope="session")
def bottle_mask() -> np.ndarray:
    mask = cv2.imread(str(FIXTURES / "bottle_mask.png"), cv2.IMREAD_UNCHANGED)
    assert mask is not None
    return mask > 0


@pytest.fixture(scope="session")
def bottle_annotation() -> dict:
    return json.loads((FIXTURES / "bottle.json").read_text())


class StubModel:
    """Fixed detection results regardless of the image."""

    def __init__(self, results):
        self.results = results
        self.calls = 0

    def __call__(self, rgb):
        self.calls += 1
        return list(self.results)


def bbox_iou(a, b) -> float:
    """Intersection over union of two [x0, y0, x1, y1] boxes, inclusive."""
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    if ix1 < ix0 or iy1 < iy0:
        return 0.0
    inter = (ix1 - ix0 + 1) * (iy1 - iy0 + 1)
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)
