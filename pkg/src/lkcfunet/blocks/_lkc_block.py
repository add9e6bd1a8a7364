"""
Large-kernel convolution block.
"""
from __future__ import annotations

import torch
from torch import nn

from ._base import NormKind, dropout, make_norm, require_channels, require_fits, spatial_conv


class LKCBlock(nn.Module):
    """Two (norm -> ReLU -> optional dropout -> conv k x k) units plus an identity residual.

    Shape is preserved. When the last convolution is all zeros the block returns its
    input unchanged.
    """

    def __init__(
        self,
        channels: int,
        kernel: int,
        *,
        norm: NormKind = "GN",
        groups: int = 8,
        dropout_p: float = 0.0,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.kernel = kernel
        self.body = nn.Sequential(
            make_norm(norm, channels, groups),
            nn.ReLU(),
            dropout(dropout_p),
            spatial_conv(channels, channels, kernel),
            make_norm(norm, channels, groups),
            nn.ReLU(),
            dropout(dropout_p),
            spatial_conv(channels, channels, kernel),
        )

    @property
    def final_conv(self) -> nn.Conv2d:
        conv = self.body[-1]
        assert isinstance(conv, nn.Conv2d)
        return conv

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        require_channels(x, self.channels, "LKCBlock")
        require_fits(x, self.kernel, "LKCBlock")
        return x + self.body(x)
