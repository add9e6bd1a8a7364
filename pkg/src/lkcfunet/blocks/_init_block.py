"""
Initial block: the first large-kernel convolution over the spliced source pair.
"""
from __future__ import annotations

import torch
from torch import nn

from .._config import ModelConfig
from .._constants import INPUT_CHANNELS
from ._base import make_norm, require_channels, require_fits, spatial_conv


class InitBlock(nn.Module):
    """Conv(k x k, 2 -> C0) -> norm -> ReLU.

    With the default config the norm is instance normalization, so each sample (and
    each channel) is standardized on its own statistics right after the first
    learned features are formed.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.kernel = cfg.init_kernel
        self.out_channels = cfg.channel_widths[0]
        self.conv = spatial_conv(INPUT_CHANNELS, self.out_channels, self.kernel)
        self.norm = make_norm(cfg.init_norm, self.out_channels)
        self.act = nn.ReLU()

    def pre_activation(self, x: torch.Tensor) -> torch.Tensor:
        """Normalized features before the ReLU."""
        require_channels(x, INPUT_CHANNELS, "InitBlock")
        require_fits(x, self.kernel, "InitBlock")
        return self.norm(self.conv(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.pre_activation(x))
