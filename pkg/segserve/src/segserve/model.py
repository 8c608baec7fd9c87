"""Torchvision instance-segmentation backends.

torch imports happen inside load_model so the service package (and its
stub-model tests) work on machines without torch installed.
"""

from __future__ import annotations

import numpy as np

# model id -> (weights enum name, builder name), both in torchvision
_SUPPORTED = {
    "maskrcnn_resnet50_fpn": ("MaskRCNN_ResNet50_FPN_Weights", "maskrcnn_resnet50_fpn"),
    "maskrcnn_resnet50_fpn_v2": ("MaskRCNN_ResNet50_FPN_V2_Weights", "maskrcnn_resnet50_fpn_v2"),
}

DEFAULT_MODEL = "maskrcnn_resnet50_fpn"
MASK_BINARIZE_THRESHOLD = 0.5


class ModelLoadError(Exception):
    """The requested model could not be constructed or its weights fetched."""


class TorchInstanceModel:
    """COCO instance segmentation as `model(rgb) -> [(label, score, mask)]`."""

    def __init__(self, net, categories: list[str], device: str):
        self._net = net
        self._device = device
        self.categories = categories

    def __call__(self, rgb: np.ndarray):
        import torch

        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
            raise ValueError(f"expected (h, w, 3) uint8 image, got {rgb.dtype} {rgb.shape}")
        tensor = torch.from_numpy(rgb.copy()).permute(2, 0, 1).float() / 255.0
        with torch.inference_mode():
            out = self._net([tensor.to(self._device)])[0]
        results = []
        for label_id, score, mask in zip(
            out["labels"].cpu().numpy(),
            out["scores"].cpu().numpy(),
            out["masks"].cpu().numpy(),
        ):
            name = self.categories[int(label_id)] if int(label_id) < len(self.categories) else "N/A"
            bits = mask[0] >= MASK_BINARIZE_THRESHOLD
            results.append((name, float(score), bits))
        return results


def load_model(model_id: str = DEFAULT_MODEL, device: str = "cpu") -> TorchInstanceModel:
    """Build the named torchvision model in eval mode on the given device.

    Weights come from the torchvision hub cache, downloading on first
    use. Raises ModelLoadError when the id is unknown, torch is not
    installed, or the weights cannot be fetched.
    """
    if model_id not in _SUPPORTED:
        raise ModelLoadError(
            f"unknown model {model_id!r}; supported: {', '.join(sorted(_SUPPORTED))}"
        )
    weights_name, builder_name = _SUPPORTED[model_id]
    try:
        import torch
        from torchvision.models import detection as tvd
    except ImportError as exc:
        raise ModelLoadError(f"torch/torchvision not installed: {exc}") from exc
    try:
        weights = getattr(tvd, weights_name).DEFAULT
        net = getattr(tvd, builder_name)(weights=weights)
    except Exception as exc:
        raise ModelLoadError(f"could not load {model_id}: {exc}") from exc
    net.eval()
    net.to(torch.device(device))
    return TorchInstanceModel(net, list(weights.meta["categories"]), device)
