"""
Blocks package.

Re-exports the network building blocks to provide a stable import surface
(e.g., `from lkcfunet.blocks import LKCBlock`).
"""

from ._base import NormKind, group_count, make_norm
from ._init_block import InitBlock
from ._lkc_block import LKCBlock
from ._lkdc_block import LKDCBlock
from ._mpafm import MPAFM, ChannelAttention, SpatialAttention
from ._sampling import Downsample, Upsample

__all__ = [
    "NormKind",
    "group_count",
    "make_norm",
    "InitBlock",
    "LKCBlock",
    "LKDCBlock",
    "MPAFM",
    "ChannelAttention",
    "SpatialAttention",
    "Downsample",
    "Upsample",
]
