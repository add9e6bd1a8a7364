"""
Architecture contracts for LKCFUNet: shapes, range, divisibility, feature maps,
batch-composition behaviour and gradient flow for every ablation row.
"""
import pytest
import torch
from torch import nn

from lkcfunet import (
    ABLATION_ROWS,
    ContractViolationError,
    LKCFUNet,
    ModelConfig,
    RejectedInputError,
    ablation_config,
    build_model,
    loss_total,
    model_forward,
)

from utils import desk_config, rand_pair


@pytest.mark.smoke
def test_default_forward_shape_and_range() -> None:
    """Default model maps (B, 2, 64, 64) to (B, 1, 64, 64) in [0, 1]."""
    model = build_model(ModelConfig(), seed=0)
    out = model_forward(rand_pair(0, 64, batch=2), model)
    assert out.shape == (2, 1, 64, 64)
    assert out.min() >= 0 and out.max() <= 1


@pytest.mark.parametrize("h, w", [(64, 64), (128, 128), (256, 256), (64, 128)])
def test_forward_shapes_desk(h: int, w: int) -> None:
    """Output dims equal input dims for multiples of 16."""
    model = build_model(desk_config(), seed=0).eval()
    x = torch.rand(1, 2, h, w)
    with torch.no_grad():
        out = model(x)
    assert out.shape == (1, 1, h, w)
    assert torch.isfinite(out).all()


def test_rejects_non_divisible_dims() -> None:
    """Dims that are not multiples of 16 are rejected with the padded size as a hint."""
    model = build_model(desk_config(), seed=0)
    with pytest.raises(RejectedInputError, match="pad to 256x256"):
        model(torch.rand(1, 2, 250, 250))


def test_rejects_wrong_channels_and_range() -> None:
    """Three-channel input and values above 1 violate the input contract."""
    model = build_model(desk_config(), seed=0)
    with pytest.raises(ContractViolationError):
        model(torch.rand(1, 3, 64, 64))
    with pytest.raises(ContractViolationError):
        model(torch.rand(1, 2, 64, 64) + 1.0)


def test_min_input_size() -> None:
    """The smallest accepted side makes every stage fit its kernel."""
    model = build_model(desk_config(), seed=0).eval()
    assert model.min_input_size == 48
    with torch.no_grad():
        assert model(torch.rand(1, 2, 48, 48)).shape == (1, 1, 48, 48)
    with pytest.raises(RejectedInputError):
        model(torch.rand(1, 2, 32, 32))


def test_feature_maps_names_and_stages() -> None:
    """Every named intermediate activation has the resolution of its stage."""
    model = build_model(desk_config(), seed=0)
    with torch.no_grad():
        maps = model.feature_maps(rand_pair(1, 64))
    assert list(maps) == ["init", "enc0", "enc1", "enc2", "enc3", "bottleneck", "dec3", "dec2", "dec1", "dec0"]
    for fm in maps.values():
        fm.check_stage_dims((64, 64))
        assert fm.is_finite()
    assert maps["bottleneck"].shape == (1, 64, 4, 4)
    assert maps["init"].shape[1] == 8


def test_module_toggles() -> None:
    """use_mpafm / use_lkdc remove the corresponding modules."""
    plain = LKCFUNet(desk_config(use_mpafm=False, use_lkdc=False))
    assert all(isinstance(m, nn.Identity) for m in plain.mpafms)
    assert all(len(stage) == 1 for stage in plain.encoders)
    full = LKCFUNet(desk_config())
    assert all(len(stage) == 2 for stage in full.encoders)


def test_build_model_seeded() -> None:
    """The same seed gives identical initial weights."""
    a = build_model(desk_config(), seed=5).state_dict()
    b = build_model(desk_config(), seed=5).state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_parameter_groups_cover_all_parameters() -> None:
    """Parameter groups partition the parameters by top-level submodule."""
    model = LKCFUNet(desk_config())
    groups = model.parameter_groups()
    assert {"init_block", "encoders.0", "bottleneck", "head"} <= set(groups)
    assert sum(len(v) for v in groups.values()) == len(list(model.parameters()))


def test_batch_composition_invariance_default() -> None:
    """Without BN a sample's output does not depend on the rest of the batch."""
    # Arrange
    model = build_model(ModelConfig(), seed=0).train()
    x = rand_pair(2, 64, batch=3)

    # Act
    with torch.no_grad():
        together = model(x)
        alone = model(x[1:2])

    # Assert
    assert torch.allclose(together[1:2], alone, atol=1e-5)


def test_batch_composition_dependence_with_bn() -> None:
    """The all-BN row mixes batch statistics in training mode."""
    model = build_model(ablation_config("I").replace(channel_widths=(8, 16, 32, 64)), seed=0).train()
    x = rand_pair(2, 64, batch=3)
    with torch.no_grad():
        together = model(x)
        alone = model(x[1:2])
    assert not torch.allclose(together[1:2], alone, atol=1e-5)


@pytest.mark.parametrize("row", ABLATION_ROWS)
def test_ablation_rows_forward_backward(row: str) -> None:
    """Every ablation row instantiates, gives a finite loss and propagates gradients to all parameters."""
    # Arrange
    model = build_model(ablation_config(row).replace(channel_widths=(8, 16, 32, 64)), seed=0).train()
    x = rand_pair(4, 64, batch=2)

    # Act
    fused = model(x)
    loss = loss_total(fused, x[:, 0:1], x[:, 1:2])
    loss.l_total.backward()

    # Assert
    assert loss.is_finite()
    for name, p in model.named_parameters():
        assert p.grad is not None, name
        assert torch.isfinite(p.grad).all(), name
    assert any(p.grad.abs().sum() > 0 for p in model.parameters())  # type: ignore[union-attr]


@pytest.mark.parametrize("row", [*ABLATION_ROWS, None])
def test_gradient_reaches_every_parameter_group(row: str | None) -> None:
    """The mean output has a nonzero gradient in every parameter group of every row."""
    # Arrange
    cfg = ModelConfig() if row is None else ablation_config(row)
    model = build_model(cfg, seed=0)
    x = rand_pair(6, 64)

    # Act
    model(x).mean().backward()

    # Assert
    dead = [
        name
        for name, params in model.parameter_groups().items()
        if not any(p.grad is not None and float(p.grad.abs().sum()) > 0 for p in params)
    ]
    assert dead == [], f"no gradient reaches {dead}"
