"""
Unit tests for the network blocks: normalization factory, InitBlock, LKCBlock,
LKDCBlock and the resolution changes.
"""
import pytest
import torch
from torch import nn

from lkcfunet import ContractViolationError, ModelConfig, RejectedInputError
from lkcfunet.blocks import Downsample, InitBlock, LKCBlock, LKDCBlock, Upsample, group_count, make_norm


@pytest.mark.parametrize(
    "channels, groups, expected",
    [(32, 8, 8), (8, 8, 8), (12, 8, 6), (10, 8, 5), (3, 8, 3), (7, 8, 7), (64, 1, 1)],
)
def test_group_count(channels: int, groups: int, expected: int) -> None:
    """The GN group count is the largest divisor of channels not above the request."""
    assert group_count(channels, groups) == expected


@pytest.mark.parametrize(
    "kind, cls",
    [("IN", nn.InstanceNorm2d), ("BN", nn.BatchNorm2d), ("GN", nn.GroupNorm), ("none", nn.Identity)],
)
def test_make_norm(kind: str, cls: type) -> None:
    """Each norm kind maps to its torch module."""
    assert isinstance(make_norm(kind, 16, 8), cls)  # type: ignore[arg-type]


def test_make_norm_unknown() -> None:
    """An unknown norm kind is a ValueError."""
    with pytest.raises(ValueError):
        make_norm("LN", 16)  # type: ignore[arg-type]


def test_instance_norm_is_affine() -> None:
    """IN carries a learnable per-channel scale and shift."""
    norm = make_norm("IN", 16)
    assert isinstance(norm, nn.InstanceNorm2d) and norm.affine


def test_lkc_block_preserves_shape() -> None:
    """LKCBlock keeps the channel count and spatial size."""
    block = LKCBlock(16, 7)
    x = torch.randn(2, 16, 20, 24)
    assert block(x).shape == x.shape


def test_lkc_block_residual_identity() -> None:
    """With the final conv zeroed the block returns its input exactly."""
    # Arrange
    block = LKCBlock(16, 15)
    nn.init.zeros_(block.final_conv.weight)
    nn.init.zeros_(block.final_conv.bias)
    x = torch.randn(2, 16, 32, 32)

    # Act
    y = block(x)

    # Assert
    assert torch.equal(y, x)


def test_lkc_block_rejects_small_inputs() -> None:
    """A feature map smaller than the kernel is rejected with a size hint."""
    with pytest.raises(RejectedInputError, match="smaller than the 15x15 kernel"):
        LKCBlock(8, 15)(torch.randn(1, 8, 8, 8))


def test_lkc_block_rejects_wrong_channels() -> None:
    """A channel count other than the block width is a contract violation."""
    with pytest.raises(ContractViolationError):
        LKCBlock(8, 3)(torch.randn(1, 4, 8, 8))


def test_lkdc_block_single_group_norm() -> None:
    """The LKDC normalization uses one GN group regardless of the body group count."""
    assert LKDCBlock(32, 7, norm="GN").norm_groups == 1
    assert LKDCBlock(32, 7, norm="BN").norm_groups is None
    assert isinstance(LKDCBlock(32, 7, norm="none").norm, nn.Identity)


def test_lkdc_block_depthwise() -> None:
    """The spatial convolution is depthwise over the expanded channels."""
    block = LKDCBlock(8, 7)
    assert block.depthwise.groups == block.depthwise.in_channels == 16
    assert block.depthwise.kernel_size == (7, 7)


def test_lkdc_block_residual_identity() -> None:
    """With the projection zeroed the LKDC block returns its input exactly."""
    block = LKDCBlock(8, 5)
    nn.init.zeros_(block.project.weight)
    nn.init.zeros_(block.project.bias)
    x = torch.randn(1, 8, 16, 16)
    assert torch.equal(block(x), x)


def test_init_block_output() -> None:
    """InitBlock maps the 2-channel pair to C0 non-negative channels at full resolution."""
    block = InitBlock(ModelConfig(channel_widths=(8, 16, 32, 64)))
    y = block(torch.rand(2, 2, 32, 32))
    assert y.shape == (2, 8, 32, 32)
    assert (y >= 0).all()


def test_init_block_instance_norm_invariance() -> None:
    """With IN, a per-sample affine change of the input leaves the normalized features unchanged."""
    # Arrange
    torch.manual_seed(0)
    block = InitBlock(ModelConfig(channel_widths=(8, 16, 32, 64)))
    x = torch.rand(1, 2, 32, 32)

    # Act
    base = block.pre_activation(x)
    shifted = block.pre_activation(2.0 * x + 0.25)

    # Assert
    assert torch.allclose(base, shifted, atol=1e-3)


def test_init_block_requires_two_channels() -> None:
    """InitBlock rejects anything but a 2-channel input."""
    block = InitBlock(ModelConfig())
    with pytest.raises(ContractViolationError):
        block(torch.rand(1, 3, 32, 32))


def test_sampling_shapes() -> None:
    """Downsample halves the size and Upsample restores it."""
    x = torch.randn(1, 8, 16, 16)
    down = Downsample(8, 16)(x)
    assert down.shape == (1, 16, 8, 8)
    assert Upsample(16, 8)(down).shape == (1, 8, 16, 16)
