"""Instance-segmentation microservice for the graspvis detection protocol.

Wraps an off-the-shelf torchvision Mask R-CNN behind the binary
request-reply schema that `graspvis.segmentation` defines, so a pipeline
configured with a remote provider can point at this service instead of
ground-truth masks. The model backend is pluggable; anything callable as
`model(rgb) -> [(label, score, bool_mask), ...]` will serve.
"""

from .model import load_model
from .service import DetectionService, ServeConfig, serve

__version__ = "0.1.0"

__all__ = [
    "DetectionService",
    "ServeConfig",
    "load_model",
    "serve",
    "__version__",
]
