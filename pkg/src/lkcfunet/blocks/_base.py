"""
Shared building pieces for the network blocks.

Provides the normalization factory used by every block, the reflect-padded
convolution helper, and the spatial-size guard that rejects inputs smaller than a
block's kernel.
"""
from __future__ import annotations

from typing import Literal

import torch
from torch import nn

from .._errors import ContractViolationError, RejectedInputError

NormKind = Literal["IN", "BN", "GN", "none"]


def group_count(channels: int, groups: int) -> int:
    """Largest group count <= min(groups, channels) that divides `channels`."""
    g = max(1, min(groups, channels))
    while channels % g:
        g -= 1
    return g


def make_norm(kind: NormKind, channels: int, groups: int = 1) -> nn.Module:
    """
    Build a normalization layer.

    Args:
        kind: ``IN`` (per-sample, per-channel), ``BN`` (per-batch), ``GN``
            (per-sample channel groups) or ``none``.
        channels: Number of feature channels.
        groups: Requested GN group count; clipped to a divisor of `channels`.

    Returns:
        The layer; ``none`` yields `nn.Identity`. Affine scales start at one and
        shifts at zero.
    """
    if kind == "IN":
        return nn.InstanceNorm2d(channels, affine=True)
    if kind == "BN":
        return nn.BatchNorm2d(channels)
    if kind == "GN":
        return nn.GroupNorm(group_count(channels, groups), channels)
    if kind == "none":
        return nn.Identity()
    raise ValueError(f"unknown normalization kind {kind!r}")


def spatial_conv(in_ch: int, out_ch: int, kernel: int, *, groups: int = 1) -> nn.Conv2d:
    """Stride-1 convolution whose reflect padding keeps H and W unchanged (odd kernels)."""
    return nn.Conv2d(
        in_ch,
        out_ch,
        kernel,
        padding=kernel // 2,
        padding_mode="reflect" if kernel > 1 else "zeros",
        groups=groups,
    )


def require_fits(x: torch.Tensor, kernel: int, where: str) -> None:
    """Reject feature maps whose height or width is smaller than `kernel`."""
    h, w = x.shape[-2:]
    if h < kernel or w < kernel:
        raise RejectedInputError(
            f"{where}: spatial dims {h}x{w} are smaller than the {kernel}x{kernel} kernel",
            hint=f"use an input at least {kernel}x{kernel} at this stage",
        )


def require_channels(x: torch.Tensor, channels: int, where: str) -> None:
    if x.dim() != 4 or x.shape[1] != channels:
        raise ContractViolationError(
            f"{where}: expected (B, {channels}, H, W), got {tuple(x.shape)}"
        )


def dropout(p: float) -> nn.Module:
    return nn.Dropout(p) if p > 0 else nn.Identity()
