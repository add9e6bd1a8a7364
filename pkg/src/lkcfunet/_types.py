"""
Shared types and tensor contract checks for lkcfunet.

Images travel through the package as channels-first float tensors shaped
(batch, channels, height, width) with values in [0, 1]; `ImageTensor` names that
contract. `FeatureMap` tags an intermediate activation with the stage and path it
came from so analysis code can ask for it by name.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, TypeAlias

import torch

from ._constants import SPATIAL_MULTIPLE
from ._errors import ContractViolationError, RejectedInputError

# (B, C, H, W), channels-first, values in [0, 1]
ImageTensor: TypeAlias = torch.Tensor

FeatureSource = Literal["init", "encoder", "bottleneck", "decoder"]


def padded_size(size: int, multiple: int = SPATIAL_MULTIPLE) -> int:
    """Round `size` up to the next multiple of `multiple`."""
    return -(-size // multiple) * multiple


def validate_image_tensor(
    x: torch.Tensor,
    *,
    channels: int | None = None,
    divisible_by: int | None = None,
    check_range: bool = True,
    name: str = "image",
) -> ImageTensor:
    """
    Check that `x` satisfies the ImageTensor contract and return it unchanged.

    Args:
        x: Candidate tensor.
        channels: Required channel count, or None to accept any.
        divisible_by: Required divisor of height and width, or None.
        check_range: Also require finite values inside [0, 1].
        name: Label used in error messages.

    Raises:
        ContractViolationError: Wrong rank, channel count, or values outside [0, 1].
        RejectedInputError: Height/width not divisible; the message carries the
            padded size that would be accepted.
    """
    if not isinstance(x, torch.Tensor):  # type: ignore # Run time type checker
        raise TypeError(f"{name} must be a torch.Tensor, got {type(x).__name__}")
    if x.dim() != 4:
        raise ContractViolationError(f"{name} must be (B, C, H, W), got shape {tuple(x.shape)}")
    if channels is not None and x.shape[1] != channels:
        raise ContractViolationError(f"{name} must have {channels} channels, got {x.shape[1]}")
    if divisible_by is not None:
        h, w = x.shape[-2:]
        if h % divisible_by or w % divisible_by:
            raise RejectedInputError(
                f"{name} spatial dims {h}x{w} are not divisible by {divisible_by}",
                hint=f"pad to {padded_size(h, divisible_by)}x{padded_size(w, divisible_by)}",
            )
    if check_range:
        if not torch.isfinite(x).all():
            raise ContractViolationError(f"{name} contains non-finite values")
        if x.numel() and (x.min() < 0 or x.max() > 1):
            raise ContractViolationError(f"{name} values must lie in [0, 1]")
    return x


def require_same_shape(*tensors: torch.Tensor, names: tuple[str, ...] = ()) -> None:
    """Raise ContractViolationError unless all tensors share one shape."""
    shapes = [tuple(t.shape) for t in tensors]
    if len(set(shapes)) > 1:
        labels = names or tuple(f"arg{i}" for i in range(len(tensors)))
        listing = ", ".join(f"{n}={s}" for n, s in zip(labels, shapes))
        raise ContractViolationError(f"shape mismatch: {listing}")


@dataclass(frozen=True)
class FeatureMap:
    """An intermediate activation tagged with where it was produced.

    Attributes:
        data: Activation shaped (B, C, H, W).
        stage: Resolution level; stage s has the input dims divided by 2**s.
        source: Which path of the network produced it.
        name: Stable layer name (``init``, ``enc0``, ``dec2``, ...).
    """

    data: torch.Tensor
    stage: int
    source: FeatureSource
    name: str = ""

    def __post_init__(self) -> None:
        if self.data.dim() != 4:
            raise ContractViolationError(
                f"FeatureMap data must be (B, C, H, W), got {tuple(self.data.shape)}"
            )
        if self.stage < 0:
            raise ValueError(f"stage must be >= 0, got {self.stage}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        b, c, h, w = self.data.shape
        return int(b), int(c), int(h), int(w)

    def check_stage_dims(self, input_hw: tuple[int, int]) -> None:
        """Raise ContractViolationError unless dims equal input dims / 2**stage."""
        scale = 2**self.stage
        expected = (input_hw[0] // scale, input_hw[1] // scale)
        if self.shape[2:] != expected:
            raise ContractViolationError(
                f"{self.name or 'feature map'} at stage {self.stage} should be "
                f"{expected[0]}x{expected[1]}, got {self.shape[2]}x{self.shape[3]}"
            )

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.data).all())


__all__ = [
    "ImageTensor",
    "FeatureSource",
    "FeatureMap",
    "padded_size",
    "validate_image_tensor",
    "require_same_shape",
]
