"""
Large-kernel depthwise convolution block.

The normalization in front of the depthwise convolution always uses a single GN
group, whatever `gn_groups_body` says; with BN or no normalization in the body it
follows the body setting.
"""
from __future__ import annotations

import torch
from torch import nn

from .._constants import LKDC_EXPANSION, LKDC_GN_GROUPS
from ._base import NormKind, make_norm, require_channels, require_fits, spatial_conv


class LKDCBlock(nn.Module):
    """norm -> 1x1 expand -> depthwise k x k -> ReLU -> 1x1 project, plus residual."""

    def __init__(
        self,
        channels: int,
        kernel: int,
        *,
        norm: NormKind = "GN",
        expansion: int = LKDC_EXPANSION,
    ) -> None:
        super().__init__()
        hidden = channels * expansion
        self.channels = channels
        self.kernel = kernel
        self.norm = make_norm(norm, channels, LKDC_GN_GROUPS)
        self.expand = nn.Conv2d(channels, hidden, 1)
        self.depthwise = spatial_conv(hidden, hidden, kernel, groups=hidden)
        self.act = nn.ReLU()
        self.project = nn.Conv2d(hidden, channels, 1)

    @property
    def norm_groups(self) -> int | None:
        """GN group count, or None when the block is not group-normalized."""
        return self.norm.num_groups if isinstance(self.norm, nn.GroupNorm) else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        require_channels(x, self.channels, "LKDCBlock")
        require_fits(x, self.kernel, "LKDCBlock")
        y = self.expand(self.norm(x))
        y = self.act(self.depthwise(y))
        return x + self.project(y)
