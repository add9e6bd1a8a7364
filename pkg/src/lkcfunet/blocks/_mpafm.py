"""
Multipath adaptive fusion module (MPAFM).

Gates an encoder skip feature `e` against the decoder feature `d` at the same
resolution and returns a recalibrated map `X` of the same shape:

    A, B  = split(W(C(e) + S(d)))
    e_att = A * e
    d_att = B * d
    f     = sigmoid(e_att) * d_att + sigmoid(d_att) * e_att
    X     = R(f) = f * sigmoid(conv3x3(f))

C is channel attention on `e` (avg- and max-pooled descriptors through a shared
bottleneck, summed), S is spatial attention on `d` (channel mean/max maps through a
7x7 conv), W is a 3x3 conv to 2C channels followed by a sigmoid.
"""
from __future__ import annotations

import torch
from torch import nn

from .._constants import MPAFM_REDUCTION, MPAFM_SPATIAL_KERNEL
from .._types import require_same_shape


class ChannelAttention(nn.Module):
    """(B, C, H, W) -> (B, C, 1, 1) channel weights from pooled descriptors."""

    def __init__(self, channels: int, reduction: int = MPAFM_REDUCTION) -> None:
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            nn.ReLU(),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = torch.mean(x, dim=(2, 3), keepdim=True)
        mx = torch.amax(x, dim=(2, 3), keepdim=True)
        return self.mlp(avg) + self.mlp(mx)


class SpatialAttention(nn.Module):
    """(B, C, H, W) -> (B, 1, H, W) map from channel mean and max."""

    def __init__(self, kernel: int = MPAFM_SPATIAL_KERNEL) -> None:
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel, padding=kernel // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = torch.mean(x, dim=1, keepdim=True)
        mx = torch.amax(x, dim=1, keepdim=True)
        return self.conv(torch.cat([avg, mx], dim=1))


class MPAFM(nn.Module):
    """Attention-gated, bidirectionally mixed and recalibrated skip connection."""

    def __init__(self, channels: int, reduction: int = MPAFM_REDUCTION) -> None:
        super().__init__()
        self.channels = channels
        self.channel_att = ChannelAttention(channels, reduction)
        self.spatial_att = SpatialAttention()
        self.refine = nn.Conv2d(channels, 2 * channels, 3, padding=1)
        self.recalibrate_conv = nn.Conv2d(channels, channels, 3, padding=1)

    def weights(self, e: torch.Tensor, d: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Refined gate maps A (for e) and B (for d), each in (0, 1)."""
        joint = self.channel_att(e) + self.spatial_att(d)
        a, b = torch.sigmoid(self.refine(joint)).chunk(2, dim=1)
        return a, b

    @staticmethod
    def interact(e_att: torch.Tensor, d_att: torch.Tensor) -> torch.Tensor:
        """Bidirectional interaction; symmetric in its two arguments."""
        return torch.sigmoid(e_att) * d_att + torch.sigmoid(d_att) * e_att

    def recalibrate(self, f: torch.Tensor) -> torch.Tensor:
        """Pixel attention map with the same shape as `f`, applied to `f`."""
        return f * torch.sigmoid(self.recalibrate_conv(f))

    def forward(self, e: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        require_same_shape(e, d, names=("e", "d"))
        a, b = self.weights(e, d)
        f = self.interact(a * e, b * d)
        return self.recalibrate(f)
