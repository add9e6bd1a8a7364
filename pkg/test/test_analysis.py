"""
Analysis procedures: histograms, local consistency, timing and receptive fields.
"""
import numpy as np
import pytest
import torch

from lkcfunet import (
    ConsistencyMap,
    ContractViolationError,
    DegenerateMetricError,
    FeatureMap,
    ModelConfig,
    ablation_config,
    bench_inference,
    bench_presets,
    build_model,
    effective_receptive_field,
    erf_coverage,
    histogram_stats,
    local_consistency,
    modality_statistics,
    plot_histograms,
)
from lkcfunet._analysis import write_modality_csv, write_timing_csv

from utils import assert_approx, desk_config, rand_gray_255

# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------


def test_constant_image_single_bin() -> None:
    """A constant image fills one bin, has zero SD and 255 of 256 bins empty."""
    stats = histogram_stats(np.full((16, 16), 100.0))
    assert stats.bins == 256
    assert np.count_nonzero(stats.histogram) == 1
    assert stats.sd == 0.0
    assert_approx(stats.sparsity, 255 / 256, abs=1e-12)


def test_ramp_histogram_is_flat() -> None:
    """Every 8-bit level once gives a uniform 256-bin histogram."""
    ramp = np.arange(256, dtype=np.float64).reshape(16, 16)
    stats = histogram_stats(ramp)
    assert np.allclose(stats.histogram, 1 / 256)
    assert stats.sparsity == 0.0


@pytest.mark.parametrize("bins", [2, 16, 256])
def test_histogram_sums_to_one(bins: int) -> None:
    """The normalized histogram sums to one and has bins + 1 edges."""
    stats = histogram_stats(rand_gray_255(0, 20, 30), bins)
    assert_approx(float(stats.histogram.sum()), 1.0, abs=1e-12)
    assert len(stats.edges) == bins + 1


def test_histogram_errors() -> None:
    """Fewer than two bins is a ValueError and an empty image a contract violation."""
    with pytest.raises(ValueError):
        histogram_stats(np.zeros((4, 4)), bins=1)
    with pytest.raises(ContractViolationError):
        histogram_stats(np.zeros((0, 0)))


@pytest.mark.parametrize("value", [300.0, -1.0])
def test_histogram_out_of_range_image(value: float) -> None:
    """An image with no value inside [0, 255] has no histogram to normalize."""
    with pytest.raises(DegenerateMetricError, match="no value"):
        histogram_stats(np.full((4, 4), value))


def test_histogram_csv(tmp_path) -> None:
    """The histogram CSV has name and SD header lines followed by one row per bin."""
    path = histogram_stats(np.full((4, 4), 10.0), 4).to_csv(tmp_path / "h.csv", name="mri")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["# image=mri", "# sd=0.000000", "bin_low,bin_high,frequency"]
    assert len(lines) == 7


def test_modality_statistics(tmp_path) -> None:
    """A sparse modality (few levels) reports higher sparsity than a dense one."""
    # Arrange
    sparse = [np.where(rand_gray_255(k, 16, 16) > 128, 255.0, 0.0) for k in range(2)]
    dense = [rand_gray_255(k + 10, 16, 16) for k in range(2)]

    # Act
    stats = modality_statistics({"CT": sparse, "MRI": dense})

    # Assert
    assert stats["CT"].count == 2
    assert stats["CT"].sparsity > stats["MRI"].sparsity
    lines = write_modality_csv(stats, tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "modality,count,SD,AG,SF,sparsity"
    with pytest.raises(ContractViolationError):
        modality_statistics({"PET": []})


def test_plot_histograms(tmp_path) -> None:
    """plot_histograms writes a figure when matplotlib is installed."""
    pytest.importorskip("matplotlib")
    out = plot_histograms({"a": histogram_stats(rand_gray_255(0, 8, 8))}, tmp_path / "h.png")
    assert out is not None and out.exists()


# ---------------------------------------------------------------------------
# Local consistency
# ---------------------------------------------------------------------------


def _consistency_oracle(fm: np.ndarray, patch: int) -> np.ndarray:
    c, h, w = fm.shape
    out = np.zeros((h // patch, w // patch))
    for gy in range(h // patch):
        for gx in range(w // patch):
            vecs = []
            for y in range(gy * patch, (gy + 1) * patch):
                for x in range(gx * patch, (gx + 1) * patch):
                    v = fm[:, y, x]
                    vecs.append(v / max(np.linalg.norm(v), 1e-8))
            total, count = 0.0, 0
            for i in range(len(vecs)):
                for j in range(len(vecs)):
                    if i != j:
                        total += float(vecs[i] @ vecs[j])
                        count += 1
            out[gy, gx] = total / count
    return out


def test_constant_patch_scores_one() -> None:
    """A patch of identical feature vectors scores exactly one."""
    fm = torch.ones(1, 4, 8, 8)
    assert np.allclose(local_consistency(fm, 4).scores, 1.0)


def test_orthogonal_vectors_score_zero() -> None:
    """One-hot channel vectors: orthogonal pairs add 0 and parallel pairs add 1."""
    fm = torch.zeros(1, 2, 2, 2, dtype=torch.float64)
    fm[0, 0, 0, :] = 1.0
    fm[0, 1, 1, :] = 1.0
    scores = local_consistency(fm, 2).scores
    # 4 vectors: two of each direction; 4 of 12 ordered pairs are parallel.
    assert_approx(float(scores[0, 0]), 4 / 12, abs=1e-12)
    column = local_consistency(fm[..., :1], 2).scores
    assert_approx(float(column[0, 0]), 0.0, abs=1e-12)


def test_consistency_matches_double_loop() -> None:
    """Patch scores agree with a plain pairwise-cosine loop."""
    fm = torch.randn(1, 8, 16, 16, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    expected = _consistency_oracle(fm[0].numpy(), 4)
    assert np.allclose(local_consistency(fm, 4).scores, expected, atol=1e-9)


def test_consistency_ragged_dims_and_single_pixel() -> None:
    """Dims that are not multiples of the patch are padded; one valid pixel scores 1."""
    fm = torch.randn(1, 3, 5, 9)
    cmap = local_consistency(fm, 4)
    assert cmap.grid == (2, 3)
    assert cmap.scores[1, 2] == 1.0
    assert np.all(np.abs(cmap.scores) <= 1.0)


def test_consistency_text_roundtrip(tmp_path) -> None:
    """A written consistency map reads back with its layer, patch and grid."""
    cmap = local_consistency(FeatureMap(torch.rand(1, 4, 8, 12), 0, "encoder", "enc0"), 4)
    path = cmap.write(tmp_path / "c.txt")
    back = ConsistencyMap.from_text(path.read_text())
    assert back.layer == "enc0" and back.patch == 4 and back.grid == (2, 3)
    assert np.allclose(back.scores, cmap.scores, atol=1e-6)
    assert path.read_text().splitlines()[2] == "# grid=2x3"


def test_flat_regions_more_consistent_than_texture() -> None:
    """Initial-block features over a flat region are more redundant than over texture."""
    # Arrange
    x = torch.full((1, 2, 64, 64), 0.4)
    noise = torch.rand(1, 2, 64, 32, generator=torch.Generator().manual_seed(1))
    x[..., 32:] = noise
    model = build_model(ModelConfig(), seed=0)

    # Act
    with torch.no_grad():
        init = model.feature_maps(x)["init"]
    cmap = local_consistency(init, 16)

    # Assert
    assert cmap.scores[:, 0].mean() > cmap.scores[:, 3].mean()


def test_consistency_errors() -> None:
    """A zero patch size is a ValueError and a 3-D input a contract violation."""
    with pytest.raises(ValueError):
        local_consistency(torch.rand(1, 2, 4, 4), 0)
    with pytest.raises(ContractViolationError):
        local_consistency(torch.rand(2, 4, 4), 2)


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


def test_single_rep_mean_is_sample() -> None:
    """With one rep the mean equals the only sample and the std is zero."""
    model = build_model(desk_config(), seed=0)
    report = bench_inference(model, warmup=0, reps=1, resolution=(64, 64))
    assert report.samples_ms[0] == report.mean_ms
    assert report.std_ms == 0.0


def test_warmup_excluded(tmp_path) -> None:
    """warmup=3, reps=10 records exactly 10 samples."""
    model = build_model(desk_config(), seed=0)
    report = bench_inference(model, warmup=3, reps=10, resolution=(64, 64))
    assert len(report.samples_ms) == 10
    assert report.to_dict()["reps"] == 10
    lines = write_timing_csv([report], tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "height,width,device,warmup,reps,mean_ms,std_ms"
    assert lines[1].startswith("64,64,cpu,3,10,")


def test_bench_given_images() -> None:
    """Timing explicit images reports their resolution."""
    model = build_model(desk_config(), seed=0)
    report = bench_inference(model, [torch.rand(1, 2, 48, 64)], warmup=0, reps=2)
    assert report.resolution == (48, 64)


def test_bench_argument_errors() -> None:
    """Zero reps or negative warmup are rejected."""
    model = build_model(desk_config(), seed=0)
    with pytest.raises(ValueError):
        bench_inference(model, reps=0)
    with pytest.raises(ValueError):
        bench_inference(model, warmup=-1)


@pytest.mark.slow
def test_larger_resolution_is_slower() -> None:
    """Mean latency at 480x640 is at least the latency at 256x256 over 30 reps."""
    model = build_model(desk_config(), seed=0)
    small, large = bench_presets(model, warmup=3, reps=30)
    assert small.resolution == (256, 256) and large.resolution == (480, 640)
    assert large.mean_ms >= small.mean_ms


# ---------------------------------------------------------------------------
# Effective receptive field
# ---------------------------------------------------------------------------


def test_init_layer_erf_is_bounded_by_kernel() -> None:
    """Without normalization the initial block only sees its 15x15 neighbourhood."""
    # Arrange
    model = build_model(ablation_config("V").replace(channel_widths=(8, 16, 32, 64)), seed=0)

    # Act
    erf = effective_receptive_field(model, 64, layer="init")

    # Assert
    assert erf.center == (32, 32)
    outside = erf.weights.copy()
    outside[25:40, 25:40] = 0.0
    assert not outside.any()
    assert erf.weights.max() == 1.0


def test_output_erf_shape_and_coverage() -> None:
    """The output-layer receptive field is size x size with nonzero coverage."""
    model = build_model(desk_config(), seed=0)
    erf = effective_receptive_field(model, 64)
    assert erf.weights.shape == (64, 64)
    assert 0.0 < erf.coverage(0.01) <= 1.0
    with pytest.raises(ValueError):
        effective_receptive_field(model, 64, layer="nope")


def test_erf_coverage() -> None:
    """Coverage is the fraction of weights at or above the threshold."""
    weights = np.zeros((10, 10))
    weights[:5] = 0.5
    assert erf_coverage(weights, 0.01) == 0.5
    assert erf_coverage(weights, 0.6) == 0.0
    with pytest.raises(ValueError):
        erf_coverage(weights, 0.0)
