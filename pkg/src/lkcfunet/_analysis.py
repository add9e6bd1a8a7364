"""
Analysis procedures: intensity histograms, feature-map local consistency,
inference timing and effective receptive fields.

Data files are the primary output of every procedure; plots are optional and need
the ``plot`` extra (matplotlib).
"""
from __future__ import annotations

import csv
import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ._constants import (
    BENCH_RESOLUTIONS,
    COSINE_EPS,
    DEFAULT_HIST_BINS,
    DEFAULT_PATCH,
    INTENSITY_MAX,
)
from ._errors import ContractViolationError, DegenerateMetricError
from ._metrics import as_gray, metric_ag, metric_sd, metric_sf
from ._model import LKCFUNet
from ._types import FeatureMap

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistogramStats:
    """Normalized intensity histogram of one image over [0, 255] and its SD."""

    histogram: np.ndarray
    edges: np.ndarray
    sd: float

    @property
    def bins(self) -> int:
        return len(self.histogram)

    @property
    def sparsity(self) -> float:
        """Fraction of empty bins."""
        return float(np.mean(self.histogram == 0))

    def to_csv(self, path: str | Path, *, name: str = "") -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            if name:
                fh.write(f"# image={name}\n")
            fh.write(f"# sd={self.sd:.6f}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_low", "bin_high", "frequency"])
            for lo, hi, freq in zip(self.edges[:-1], self.edges[1:], self.histogram):
                writer.writerow([f"{lo:.4f}", f"{hi:.4f}", f"{freq:.10f}"])
        return path


def histogram_stats(img: np.ndarray, bins: int = DEFAULT_HIST_BINS) -> HistogramStats:
    """
    Normalized histogram (sums to 1) of a 0-255 image plus its standard deviation.

    Raises:
        ValueError: bins < 2.
        ContractViolationError: Empty image.
        DegenerateMetricError: No value falls inside [0, 255].
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    f = as_gray(img)
    if f.size == 0:
        raise ContractViolationError("histogram_stats: empty image")
    counts, edges = np.histogram(f, bins=bins, range=(0.0, INTENSITY_MAX))
    if counts.sum() == 0:
        raise DegenerateMetricError("histogram_stats: no value lies in [0, 255]")
    return HistogramStats(counts / counts.sum(), edges, metric_sd(f))


@dataclass(frozen=True)
class ModalityStats:
    """Mean no-reference statistics of a set of images from one modality."""

    count: int
    mean_sd: float
    mean_ag: float
    mean_sf: float
    sparsity: float


def modality_statistics(
    images: Mapping[str, Sequence[np.ndarray]], bins: int = DEFAULT_HIST_BINS
) -> dict[str, ModalityStats]:
    """Compare modalities by their mean SD, AG, SF and histogram sparsity."""
    stats: dict[str, ModalityStats] = {}
    for name, group in images.items():
        if not group:
            raise ContractViolationError(f"modality {name!r} has no images")
        hists = [histogram_stats(img, bins) for img in group]
        stats[name] = ModalityStats(
            count=len(group),
            mean_sd=float(np.mean([h.sd for h in hists])),
            mean_ag=float(np.mean([metric_ag(img) for img in group])),
            mean_sf=float(np.mean([metric_sf(img) for img in group])),
            sparsity=float(np.mean([h.sparsity for h in hists])),
        )
    return stats


def write_modality_csv(stats: Mapping[str, ModalityStats], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["modality", "count", "SD", "AG", "SF", "sparsity"])
        for name, s in stats.items():
            writer.writerow(
                [name, s.count, f"{s.mean_sd:.6f}", f"{s.mean_ag:.6f}", f"{s.mean_sf:.6f}", f"{s.sparsity:.6f}"]
            )
    return path


def plot_histograms(stats: Mapping[str, HistogramStats], path: str | Path) -> Path | None:
    """Overlay histograms with their SD in the legend; returns None without matplotlib."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib is not installed; skipping plot %s", path)
        return None

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, s in stats.items():
        centers = (s.edges[:-1] + s.edges[1:]) / 2
        ax.plot(centers, s.histogram, label=f"{name} (SD={s.sd:.2f})")
    ax.set_xlabel("intensity")
    ax.set_ylabel("frequency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# Local consistency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsistencyMap:
    """
    Patch-wise redundancy of a feature map.

    Attributes:
        scores: (H/p, W/p) grid (rounded up); each entry is the mean pairwise cosine
            similarity of the per-pixel channel vectors inside one p x p patch.
        patch: Patch side p.
        layer: Name of the feature map it was computed on.
    """

    scores: np.ndarray
    patch: int
    layer: str = ""

    def __post_init__(self) -> None:
        if self.scores.ndim != 2:
            raise ContractViolationError(f"scores must be 2-D, got shape {self.scores.shape}")

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.scores.shape[0]), int(self.scores.shape[1])

    def mean(self) -> float:
        return float(self.scores.mean())

    def to_text(self) -> str:
        """
        Plain-text grid format::

            # layer=init
            # patch=16
            # grid=4x4
            0.912345 0.887000 ...
            ...
        """
        lines = [f"# layer={self.layer}", f"# patch={self.patch}", f"# grid={self.grid[0]}x{self.grid[1]}"]
        lines += [" ".join(f"{v:.6f}" for v in row) for row in self.scores]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def from_text(cls, text: str) -> ConsistencyMap:
        meta: dict[str, str] = {}
        rows: list[list[float]] = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line.strip():
                rows.append([float(v) for v in line.split()])
        return cls(np.array(rows, dtype=np.float64), int(meta.get("patch", "0")), meta.get("layer", ""))


def local_consistency(
    fm: FeatureMap | torch.Tensor, patch: int = DEFAULT_PATCH, *, index: int = 0
) -> ConsistencyMap:
    """
    Mean pairwise cosine similarity of channel vectors within each p x p patch.

    Channel vectors are normalized as v / max(|v|, 1e-8), so zero vectors have cosine
    0 with everything. Dims that are not multiples of `patch` are zero-padded and the
    padding is masked out; a patch with a single valid pixel scores 1. Higher scores
    mean more redundant features.

    Args:
        fm: Feature map (B, C, H, W), or a FeatureMap.
        patch: Patch side.
        index: Batch element to analyse.
    """
    if patch < 1:
        raise ValueError(f"patch must be >= 1, got {patch}")
    data = fm.data if isinstance(fm, FeatureMap) else fm
    layer = fm.name if isinstance(fm, FeatureMap) else ""
    if data.dim() != 4:
        raise ContractViolationError(f"feature map must be (B, C, H, W), got {tuple(data.shape)}")

    x = data[index].detach().cpu().double()
    c, h, w = x.shape
    u = x / x.norm(dim=0, keepdim=True).clamp_min(COSINE_EPS)
    gh, gw = -(-h // patch), -(-w // patch)
    pad = (0, gw * patch - w, 0, gh * patch - h)
    u = torch.nn.functional.pad(u, pad)
    valid = torch.nn.functional.pad(torch.ones(1, h, w, dtype=torch.float64), pad)

    def per_patch(t: torch.Tensor) -> torch.Tensor:
        return t.reshape(t.shape[0], gh, patch, gw, patch).sum(dim=(2, 4))

    summed = per_patch(u)
    self_sim = per_patch((u * u).sum(dim=0, keepdim=True))[0]
    n = per_patch(valid)[0]
    pairs = n * (n - 1)
    cross = (summed * summed).sum(dim=0) - self_sim
    scores = torch.where(pairs > 0, cross / pairs.clamp_min(1), torch.ones_like(cross))
    return ConsistencyMap(scores.clamp(-1.0, 1.0).numpy(), patch, layer)


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimingReport:
    """
    Inference latency at one resolution.

    Only the span from calling the model to having its output is timed; warm-up
    calls are not in `samples_ms`.
    """

    samples_ms: tuple[float, ...]
    resolution: tuple[int, int]
    warmup: int
    device: str = "cpu"

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.samples_ms))

    @property
    def std_ms(self) -> float:
        return float(np.std(self.samples_ms))

    def to_dict(self) -> dict[str, object]:
        return {
            "height": self.resolution[0],
            "width": self.resolution[1],
            "device": self.device,
            "warmup": self.warmup,
            "reps": len(self.samples_ms),
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "samples_ms": list(self.samples_ms),
        }


def write_timing_csv(reports: Sequence[TimingReport], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["height", "width", "device", "warmup", "reps", "mean_ms", "std_ms"])
        for r in reports:
            writer.writerow(
                [r.resolution[0], r.resolution[1], r.device, r.warmup, len(r.samples_ms),
                 f"{r.mean_ms:.4f}", f"{r.std_ms:.4f}"]
            )
    return path


def _sync(device: torch.device) -> None:
    if device.type == "cuda":
        torch.cuda.synchronize(device)


def bench_inference(
    model: LKCFUNet,
    images: Sequence[torch.Tensor] | None = None,
    *,
    warmup: int = 3,
    reps: int = 10,
    resolution: tuple[int, int] = BENCH_RESOLUTIONS[0],
    seed: int = 0,
) -> TimingReport:
    """
    Time `reps` forward passes after `warmup` untimed ones.

    Args:
        model: Network to time; runs in eval and inference mode on its own device.
        images: Prepared (1, 2, H, W) inputs, cycled through; if None, seeded random
            inputs at `resolution` are used.

    Raises:
        ValueError: reps < 1 or warmup < 0.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    device = next(model.parameters()).device
    if not images:
        gen = torch.Generator().manual_seed(seed)
        images = [torch.rand(1, 2, *resolution, generator=gen)]
    inputs = [img.to(device) for img in images]
    resolution = (int(inputs[0].shape[-2]), int(inputs[0].shape[-1]))

    model.eval()
    samples: list[float] = []
    with torch.inference_mode():
        for i in range(warmup + reps):
            x = inputs[i % len(inputs)]
            _sync(device)
            started = time.perf_counter()
            model(x)
            _sync(device)
            elapsed = (time.perf_counter() - started) * 1e3
            if i >= warmup:
                samples.append(elapsed)
    report = TimingReport(tuple(samples), resolution, warmup, str(device))
    logger.info("%dx%d: %.2f +- %.2f ms over %d reps", *resolution, report.mean_ms, report.std_ms, reps)
    return report


def bench_presets(
    model: LKCFUNet,
    *,
    warmup: int = 3,
    reps: int = 10,
    resolutions: Sequence[tuple[int, int]] = BENCH_RESOLUTIONS,
    seed: int = 0,
) -> list[TimingReport]:
    """`bench_inference` at each preset resolution (256x256 and 480x640 by default)."""
    return [bench_inference(model, warmup=warmup, reps=reps, resolution=r, seed=seed) for r in resolutions]


# ---------------------------------------------------------------------------
# Effective receptive field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReceptiveField:
    """Normalized input-gradient magnitude of one output location (max = 1)."""

    weights: np.ndarray
    layer: str
    center: tuple[int, int] = field(default=(0, 0))

    def coverage(self, threshold: float = 0.01) -> float:
        return erf_coverage(self.weights, threshold)


def effective_receptive_field(
    model: LKCFUNet,
    size: int = 64,
    *,
    layer: str = "output",
    seed: int = 0,
) -> ReceptiveField:
    """
    Gradient of the centre activation of `layer` with respect to the input pair.

    Args:
        model: Network; evaluated in eval mode.
        size: Side of the square random input (multiple of 16).
        layer: ``output`` for the fused image, otherwise a `LKCFUNet.feature_maps` key.
        seed: Seed for the random input.

    Returns:
        |d activation / d input| summed over input channels, normalized to max 1.
    """
    device = next(model.parameters()).device
    gen = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 2, size, size, generator=gen).to(device).requires_grad_(True)
    model.eval()
    if layer == "output":
        out = model(x)
    else:
        maps = model.feature_maps(x)
        if layer not in maps:
            raise ValueError(f"unknown layer {layer!r}; expected 'output' or one of {sorted(maps)}")
        out = maps[layer].data
    cy, cx = out.shape[-2] // 2, out.shape[-1] // 2
    out[0, :, cy, cx].sum().backward()
    grad = x.grad.detach().abs().sum(dim=(0, 1)).cpu().double().numpy()  # type: ignore[union-attr]
    peak = grad.max()
    weights = grad / peak if peak > 0 else grad
    scale = size // out.shape[-2]
    return ReceptiveField(weights, layer, (cy * scale, cx * scale))


def erf_coverage(weights: np.ndarray, threshold: float = 0.01) -> float:
    """Fraction of input pixels whose normalized ERF weight is at least `threshold`."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    return float(np.mean(np.asarray(weights) >= threshold))


__all__ = [
    "HistogramStats",
    "ModalityStats",
    "ConsistencyMap",
    "TimingReport",
    "ReceptiveField",
    "histogram_stats",
    "modality_statistics",
    "write_modality_csv",
    "plot_histograms",
    "local_consistency",
    "bench_inference",
    "bench_presets",
    "write_timing_csv",
    "effective_receptive_field",
    "erf_coverage",
]
