"""
Color conversion, patch sampling, inference padding and synthetic pairs.
"""
import numpy as np
import pytest
import torch
from scipy import stats

from lkcfunet import (
    ContractViolationError,
    DatasetError,
    ImagePair,
    PatchDataset,
    PatchSampler,
    from_luminance,
    make_synthetic_pairs,
    pad_for_inference,
    sample_training_batch,
    to_luminance,
)
from lkcfunet._data import pad_to_multiple, worker_seed

from utils import assert_approx


def test_gray_pixels_have_neutral_chroma() -> None:
    """R = G = B maps to Y = R and Cb = Cr = 0.5."""
    img = torch.full((3, 4, 4), 0.37, dtype=torch.float64)
    y, cb, cr = to_luminance(img)
    assert torch.allclose(y, img[:1], atol=1e-12)
    assert torch.allclose(cb, torch.full_like(cb, 0.5), atol=1e-12)
    assert torch.allclose(cr, torch.full_like(cr, 0.5), atol=1e-12)


def test_pure_red_luminance() -> None:
    """Pure red has luminance 0.299."""
    red = torch.zeros(3, 2, 2, dtype=torch.float64)
    red[0] = 1.0
    y, _, _ = to_luminance(red)
    assert_approx(float(y[0, 0, 0]), 0.299, abs=1e-12)


def test_color_roundtrip() -> None:
    """RGB -> YCbCr -> RGB recovers the image within one 8-bit level."""
    gen = torch.Generator().manual_seed(0)
    img = torch.rand(2, 3, 16, 16, generator=gen)
    back = from_luminance(*to_luminance(img))
    assert (back - img).abs().max() <= 1 / 255


def test_clamp_inactive_for_in_gamut_inputs() -> None:
    """Exact coefficients keep reconstructed in-gamut pixels within [0, 1] up to rounding."""
    gen = torch.Generator().manual_seed(1)
    img = torch.rand(3, 32, 32, generator=gen, dtype=torch.float64)
    img[:, 0, 0] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    planes = to_luminance(img)
    clamped = from_luminance(*planes)
    raw = from_luminance(*planes, clamp=False)
    assert (clamped - raw).abs().max() <= 1e-6


def test_fused_luminance_outside_gamut_is_clamped() -> None:
    """A fused luminance above 1 still gives RGB inside [0, 1]."""
    _, cb, cr = to_luminance(torch.rand(3, 4, 4))
    out = from_luminance(torch.ones(1, 4, 4) * 1.5, cb, cr)
    assert out.min() >= 0 and out.max() <= 1


def test_color_conversion_contracts() -> None:
    """Conversion rejects non-RGB input and mismatched planes."""
    with pytest.raises(ContractViolationError):
        to_luminance(torch.rand(1, 4, 4))
    with pytest.raises(ContractViolationError):
        from_luminance(torch.rand(1, 4, 4), torch.rand(1, 4, 4), torch.rand(1, 4, 5))


def test_image_pair_validation() -> None:
    """Unaligned sizes, a color modal_a and an unknown task are rejected."""
    with pytest.raises(ContractViolationError, match="not aligned"):
        ImagePair(torch.rand(1, 8, 8), torch.rand(1, 8, 9))
    with pytest.raises(ContractViolationError):
        ImagePair(torch.rand(3, 8, 8), torch.rand(1, 8, 8))
    with pytest.raises(ValueError):
        ImagePair(torch.rand(1, 8, 8), torch.rand(1, 8, 8), task="XYZ")  # type: ignore[arg-type]


def test_image_pair_stacked_uses_luminance() -> None:
    """A color modal_b is stacked by its luminance channel."""
    rgb = torch.rand(3, 8, 8)
    pair = ImagePair(torch.rand(1, 8, 8), rgb)
    assert pair.is_color
    stacked = pair.stacked()
    assert stacked.shape == (2, 8, 8)
    assert torch.allclose(stacked[1:], to_luminance(rgb)[0])


@pytest.mark.smoke
def test_sample_training_batch_default_shape() -> None:
    """The default batch is 32 crops of 2x64x64."""
    batch = sample_training_batch(make_synthetic_pairs(2, 64), 64, 32, 0)
    assert batch.shape == (32, 2, 64, 64)


def test_sampler_deterministic() -> None:
    """The same seed gives the same batch and a different seed another."""
    pairs = make_synthetic_pairs(3, 80)
    a = sample_training_batch(pairs, 64, 8, seed=11)
    b = sample_training_batch(pairs, 64, 8, seed=11)
    c = sample_training_batch(pairs, 64, 8, seed=12)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_crop_offsets_uniform() -> None:
    """A 66x66 image with 64x64 crops has 9 origins, drawn uniformly."""
    # Arrange
    pair = make_synthetic_pairs(1, 66)[0]
    sampler = PatchSampler([pair], 64, seed=3)

    # Act
    counts = np.zeros(9)
    for _ in range(10_000):
        _, top, left = sampler.draw()
        counts[top * 3 + left] += 1

    # Assert
    assert stats.chisquare(counts).pvalue > 1e-3


def test_sampler_errors() -> None:
    """No pairs or an image smaller than the crop is a dataset error."""
    with pytest.raises(DatasetError):
        PatchSampler([], 64)
    with pytest.raises(DatasetError, match="does not fit"):
        PatchSampler(make_synthetic_pairs(1, 48), 64)


def test_crops_come_from_the_pair() -> None:
    """A crop the size of the image is the stacked pair itself."""
    pair = make_synthetic_pairs(1, 64)[0]
    batch = sample_training_batch([pair], 64, 2, seed=0)
    assert torch.equal(batch[0], pair.stacked())


def test_worker_seeds_differ() -> None:
    """Each loader worker gets a distinct, repeatable seed."""
    seeds = {worker_seed(0, w) for w in range(4)}
    assert len(seeds) == 4
    assert worker_seed(0, 1) == worker_seed(0, 1)


def test_patch_dataset_stream() -> None:
    """The patch dataset yields same-shaped batches indefinitely."""
    dataset = PatchDataset(make_synthetic_pairs(2, 64), 64, 4, seed=0)
    stream = iter(dataset)
    first, second = next(stream), next(stream)
    assert first.shape == second.shape == (4, 2, 64, 64)


@pytest.mark.parametrize("h, w", [(256, 256), (480, 640)])
def test_padding_noop_for_multiples(h: int, w: int) -> None:
    """Sizes already a multiple of 16 are not padded."""
    pair = ImagePair(torch.rand(1, h, w), torch.rand(1, h, w))
    x, record = pad_for_inference(pair)
    assert x.shape == (1, 2, h, w)
    assert not record.padded


def test_padding_250_to_256_and_back() -> None:
    """A 250x250 pair pads to 256x256 and the record crops back to 250x250."""
    pair = ImagePair(torch.rand(1, 250, 250), torch.rand(1, 250, 250))
    x, record = pad_for_inference(pair)
    assert x.shape == (1, 2, 256, 256)
    cropped = record.crop(x)
    assert cropped.shape == (1, 2, 250, 250)
    assert torch.equal(cropped[0], pair.stacked())


def test_padding_min_size() -> None:
    """Padding grows each side up to the minimum input size."""
    x, record = pad_to_multiple(torch.rand(1, 2, 32, 20), min_size=48)
    assert x.shape == (1, 2, 48, 48)
    assert (record.pad_bottom, record.pad_right) == (16, 28)


def test_padding_tiny_image_replicates() -> None:
    """An image smaller than the pad width is extended by replicating its border."""
    x, _ = pad_to_multiple(torch.rand(1, 2, 3, 3))
    assert x.shape == (1, 2, 16, 16)
    assert torch.equal(x[..., -1, -1], x[..., 2, 2])


def test_synthetic_pairs() -> None:
    """Synthetic pairs are numbered, in range and of the requested size and task."""
    pairs = make_synthetic_pairs(3, 32, seed=1, task="IVIF", color=True)
    assert [p.pair_id for p in pairs] == ["synthetic000", "synthetic001", "synthetic002"]
    for p in pairs:
        assert p.task == "IVIF" and p.is_color
        assert p.size == (32, 32)
        assert p.modal_a.min() >= 0 and p.modal_a.max() <= 1
    with pytest.raises(DatasetError):
        make_synthetic_pairs(0)
