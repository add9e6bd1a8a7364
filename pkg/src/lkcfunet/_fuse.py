"""
Inference: fuse source pairs with a trained model and score the results.
"""
from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ._config import fingerprint
from ._constants import INTENSITY_MAX
from ._data import ImagePair, from_luminance, pad_for_inference, to_luminance, write_image
from ._metrics import MetricReport, evaluate_pair
from ._model import LKCFUNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusedResult:
    """
    Output of fusing one pair.

    Attributes:
        luminance: Fused Y plane, (1, H, W) in [0, 1].
        color: RGB reconstruction (3, H, W); present exactly when modal_b was color.
        pair_id: Identifier of the source pair.
        fingerprint: Model-config fingerprint of the network that produced it.
    """

    luminance: torch.Tensor
    color: torch.Tensor | None
    pair_id: str
    fingerprint: str

    @property
    def image(self) -> torch.Tensor:
        """The displayable result: the color reconstruction if any, else the Y plane."""
        return self.color if self.color is not None else self.luminance

    def save(self, path: str | Path) -> Path:
        return write_image(path, self.image)


def fuse_pair(model: LKCFUNet, pair: ImagePair, *, device: str | torch.device | None = None) -> FusedResult:
    """
    Fuse one pair of any size.

    The stacked input is padded to a multiple of 16 (see `pad_to_multiple`), run
    through `model` in eval and inference mode and cropped back to the original
    H x W. The model's train/eval mode is restored afterwards. A color modal_b gets
    its chroma reinjected around the fused luminance.
    """
    device = torch.device(device) if device is not None else next(model.parameters()).device
    x, record = pad_for_inference(pair, min_size=model.min_input_size)
    was_training = model.training
    model.eval()
    try:
        with torch.inference_mode():
            y = record.crop(model(x.to(device)))[0].cpu()
    finally:
        model.train(was_training)

    color = None
    if pair.is_color:
        _, cb, cr = to_luminance(pair.modal_b.float())
        color = from_luminance(y, cb, cr)
    return FusedResult(y, color, pair.pair_id, fingerprint(model.cfg))


def to_intensity(img: torch.Tensor) -> np.ndarray:
    """[0, 1] tensor (C, H, W) -> float64 array on the 0-255 scale (HxW or HxWx3)."""
    x = img.detach().cpu().double()
    if x.dim() == 3:
        x = x[0] if x.shape[0] == 1 else x.permute(1, 2, 0)
    return x.numpy() * INTENSITY_MAX


def evaluate_model(
    model: LKCFUNet,
    pairs: Iterable[ImagePair],
    *,
    dataset: str = "",
    device: str | torch.device | None = None,
) -> MetricReport:
    """Fuse every pair and compute the six metrics of each fused luminance image."""
    report = MetricReport(dataset=dataset, fingerprint=fingerprint(model.cfg))
    for pair in pairs:
        result = fuse_pair(model, pair, device=device)
        report.add(
            evaluate_pair(
                to_intensity(result.luminance),
                to_intensity(pair.modal_a),
                to_intensity(pair.luminance_b()),
                image_id=pair.pair_id,
            )
        )
    logger.debug("evaluated %d pairs (%s)", len(report.rows), dataset or "unnamed set")
    return report


__all__ = ["FusedResult", "fuse_pair", "evaluate_model", "to_intensity"]
