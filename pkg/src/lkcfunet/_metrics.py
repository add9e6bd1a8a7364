"""
Fusion-quality metrics: SD, AG, SF, SCD, VIFF and SSIM.

All metrics work on grayscale (luminance) images on the 0-255 scale as float64
numpy arrays; color inputs (H, W, 3) or (3, H, W) are reduced to BT.601 luma first.
Definitions:

    SD    population standard deviation of the pixel values
    AG    mean over the (H-1) x (W-1) interior of sqrt((dx^2 + dy^2) / 2), forward
          differences
    SF    sqrt(RF^2 + CF^2); RF / CF = root-mean-square of horizontal / vertical
          neighbour differences
    SCD   r(F - B, A) + r(F - A, B), Pearson r with population moments
    VIFF  pixel-domain visual information fidelity over 4 scales (Gaussian windows of
          17, 9, 5, 3 taps, std = taps / 5, mirror borders, downsample by 2 between
          scales), noise variance 2; the two sources are combined by pooling their
          information terms, i.e. a source-information-weighted average
    SSIM  mean of SSIM(A, F) and SSIM(B, F) with dynamic range 255

Degenerate correlations raise `DegenerateMetricError`; `evaluate_pair` records such
metrics as missing instead of zero so aggregates are not biased.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import torch
from scipy import ndimage

from ._constants import (
    BT601_KB,
    BT601_KG,
    BT601_KR,
    INTENSITY_MAX,
    INTENSITY_SCALE_TAG,
    METRIC_COLUMNS,
    VIFF_EPS,
    VIFF_NOISE_VAR,
    VIFF_SCALES,
)
from ._errors import ContractViolationError, DegenerateMetricError, RejectedInputError
from ._losses import ssim_index

logger = logging.getLogger(__name__)

Rank = Literal["best", "second", ""]


def as_gray(img: np.ndarray | Sequence[Any]) -> np.ndarray:
    """Return a 2-D float64 luminance array; color images are reduced with BT.601 luma."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[-1] == 3:
        return BT601_KR * arr[..., 0] + BT601_KG * arr[..., 1] + BT601_KB * arr[..., 2]
    if arr.ndim == 3 and arr.shape[0] == 3:
        return BT601_KR * arr[0] + BT601_KG * arr[1] + BT601_KB * arr[2]
    if arr.ndim == 3 and arr.shape[0] == 1:
        return arr[0]
    if arr.ndim == 3 and arr.shape[-1] == 1:
        return arr[..., 0]
    raise ContractViolationError(f"expected a grayscale or 3-channel image, got shape {arr.shape}")


def _require_min_dims(f: np.ndarray, size: int, metric: str) -> None:
    if f.ndim != 2 or min(f.shape) < size:
        raise RejectedInputError(
            f"{metric}: image of shape {f.shape} is too small", hint=f"need at least {size}x{size}"
        )


def metric_sd(img: np.ndarray) -> float:
    """Population standard deviation of pixel intensities."""
    f = as_gray(img)
    if f.size == 0:
        raise ContractViolationError("metric_sd: empty image")
    return float(np.std(f))


def metric_ag(img: np.ndarray) -> float:
    """Average gradient over the interior, sqrt((dx^2 + dy^2) / 2) per pixel."""
    f = as_gray(img)
    _require_min_dims(f, 2, "metric_ag")
    dx = f[:-1, 1:] - f[:-1, :-1]
    dy = f[1:, :-1] - f[:-1, :-1]
    return float(np.mean(np.sqrt((dx * dx + dy * dy) / 2.0)))


def metric_sf(img: np.ndarray) -> float:
    """Spatial frequency sqrt(RF^2 + CF^2)."""
    f = as_gray(img)
    _require_min_dims(f, 2, "metric_sf")
    rf = math.sqrt(float(np.mean((f[:, 1:] - f[:, :-1]) ** 2)))
    cf = math.sqrt(float(np.mean((f[1:, :] - f[:-1, :]) ** 2)))
    return math.hypot(rf, cf)


def pearson(x: np.ndarray, y: np.ndarray, *, label: str = "pearson") -> float:
    """Pearson correlation with population moments; zero variance is an error."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.mean(dx * dx)))
    sy = math.sqrt(float(np.mean(dy * dy)))
    if sx <= 1e-12 or sy <= 1e-12:
        raise DegenerateMetricError(f"{label}: correlation undefined for a zero-variance input")
    return float(np.mean(dx * dy)) / (sx * sy)


def metric_scd(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Sum of the correlations of differences, in [-2, 2]."""
    f, ga, gb = as_gray(fused), as_gray(a), as_gray(b)
    if not (f.shape == ga.shape == gb.shape):
        raise ContractViolationError(f"metric_scd: shape mismatch {f.shape}, {ga.shape}, {gb.shape}")
    return pearson(f - gb, ga, label="SCD r(F-B, A)") + pearson(f - ga, gb, label="SCD r(F-A, B)")


def gaussian_window(taps: int) -> np.ndarray:
    """Normalized 2-D Gaussian with std taps / 5."""
    sd = taps / 5.0
    x = np.arange(taps, dtype=np.float64) - (taps - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sd * sd))
    w = np.outer(g, g)
    return w / w.sum()


def _filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    return ndimage.correlate(img, win, mode="mirror")


def vif_information(reference: np.ndarray, distorted: np.ndarray) -> tuple[list[float], list[float]]:
    """
    Per-scale information terms of pixel-domain VIF.

    Returns:
        (num, den): for each of the 4 scales, the information shared between
        reference and distorted image and the information in the reference alone.
        VIF is sum(num) / sum(den).
    """
    ref = np.asarray(reference, dtype=np.float64)
    dist = np.asarray(distorted, dtype=np.float64)
    eps = VIFF_EPS
    num: list[float] = []
    den: list[float] = []
    for scale in range(1, VIFF_SCALES + 1):
        win = gaussian_window(2 ** (VIFF_SCALES - scale + 1) + 1)
        if scale > 1:
            ref = _filter(ref, win)[::2, ::2]
            dist = _filter(dist, win)[::2, ::2]
        mu1 = _filter(ref, win)
        mu2 = _filter(dist, win)
        s1 = np.maximum(_filter(ref * ref, win) - mu1 * mu1, 0.0)
        s2 = np.maximum(_filter(dist * dist, win) - mu2 * mu2, 0.0)
        s12 = _filter(ref * dist, win) - mu1 * mu2

        g = s12 / (s1 + eps)
        sv = s2 - g * s12

        flat_ref = s1 < eps
        g[flat_ref] = 0.0
        sv[flat_ref] = s2[flat_ref]
        s1[flat_ref] = 0.0

        flat_dist = s2 < eps
        g[flat_dist] = 0.0
        sv[flat_dist] = 0.0

        negative = g < 0
        sv[negative] = s2[negative]
        g[negative] = 0.0
        sv[sv <= eps] = eps

        num.append(float(np.sum(np.log10(1.0 + g * g * s1 / (sv + VIFF_NOISE_VAR)))))
        den.append(float(np.sum(np.log10(1.0 + s1 / VIFF_NOISE_VAR))))
    return num, den


def metric_viff(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """
    Visual information fidelity of the fused image with respect to both sources.

    Raises:
        RejectedInputError: Smallest image side below 32 (4-scale pyramid).
        DegenerateMetricError: Both sources carry no information (constant images).
    """
    f, ga, gb = as_gray(fused), as_gray(a), as_gray(b)
    if not (f.shape == ga.shape == gb.shape):
        raise ContractViolationError(f"metric_viff: shape mismatch {f.shape}, {ga.shape}, {gb.shape}")
    _require_min_dims(f, 2 ** (VIFF_SCALES + 1), "metric_viff")
    num_a, den_a = vif_information(ga, f)
    num_b, den_b = vif_information(gb, f)
    total_den = sum(den_a) + sum(den_b)
    if total_den <= 0:
        raise DegenerateMetricError("VIFF: sources carry no information (constant images)")
    return (sum(num_a) + sum(num_b)) / total_den


def metric_ssim(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Mean of SSIM(A, F) and SSIM(B, F) on the 0-255 scale."""
    def tensor(img: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(as_gray(img)))[None, None]

    tf, ta, tb = tensor(fused), tensor(a), tensor(b)
    with torch.no_grad():
        s_a = float(ssim_index(ta, tf, data_range=INTENSITY_MAX))
        s_b = float(ssim_index(tb, tf, data_range=INTENSITY_MAX))
    return (s_a + s_b) / 2.0


@dataclass(frozen=True)
class MetricRow:
    """Six metric values for one fused image; None marks a degenerate (missing) metric."""

    image_id: str
    sd: float
    ag: float
    sf: float
    scd: float | None
    viff: float | None
    ssim: float

    def values(self) -> dict[str, float | None]:
        """Values keyed by column name in report order."""
        return dict(zip(METRIC_COLUMNS, (self.sd, self.ag, self.sf, self.scd, self.viff, self.ssim)))


def evaluate_pair(
    fused: np.ndarray, a: np.ndarray, b: np.ndarray, *, image_id: str = ""
) -> MetricRow:
    """
    Compute all six metrics for one fused image against its two sources.

    Inputs are 0-255 images; color images are reduced to luminance. SCD and VIFF
    values that are undefined for the input are recorded as None.
    """
    f, ga, gb = as_gray(fused), as_gray(a), as_gray(b)
    if not (f.shape == ga.shape == gb.shape):
        raise ContractViolationError(f"evaluate_pair: shape mismatch {f.shape}, {ga.shape}, {gb.shape}")

    optional: dict[str, float | None] = {}
    for name, fn in (("scd", metric_scd), ("viff", metric_viff)):
        try:
            optional[name] = fn(f, ga, gb)
        except DegenerateMetricError as exc:
            logger.warning("%s: %s recorded as missing (%s)", image_id or "image", name.upper(), exc)
            optional[name] = None

    return MetricRow(
        image_id=image_id,
        sd=metric_sd(f),
        ag=metric_ag(f),
        sf=metric_sf(f),
        scd=optional["scd"],
        viff=optional["viff"],
        ssim=metric_ssim(f, ga, gb),
    )


def _mean(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


@dataclass
class MetricReport:
    """Per-image metric rows plus the metadata needed to compare reports.

    Aggregates are arithmetic means over the rows where a metric is present.
    """

    rows: list[MetricRow] = field(default_factory=list)
    dataset: str = ""
    fingerprint: str = ""
    intensity_scale: str = INTENSITY_SCALE_TAG

    def add(self, row: MetricRow) -> None:
        self.rows.append(row)

    def aggregate(self) -> dict[str, float | None]:
        return {col: _mean(row.values()[col] for row in self.rows) for col in METRIC_COLUMNS}

    def metadata(self, *, timestamp: bool = True) -> dict[str, str]:
        meta = {
            "dataset": self.dataset,
            "fingerprint": self.fingerprint,
            "intensity_scale": self.intensity_scale,
        }
        if timestamp:
            meta["created"] = dt.datetime.now().isoformat(timespec="seconds")
        return meta

    def to_csv(self, path: str | Path, *, timestamp: bool = True) -> Path:
        """Write ``# key=value`` header lines, then image,SD,AG,SF,SCD,VIFF,SSIM rows and a mean row."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            for key, value in self.metadata(timestamp=timestamp).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["image", *METRIC_COLUMNS])
            for row in self.rows:
                writer.writerow([row.image_id, *(_fmt(v) for v in row.values().values())])
            writer.writerow(["mean", *(_fmt(v) for v in self.aggregate().values())])
        return path

    def to_json(self, path: str | Path, *, timestamp: bool = True) -> Path:
        path = Path(path)
        payload = {
            "meta": self.metadata(timestamp=timestamp),
            "columns": list(METRIC_COLUMNS),
            "rows": [{"image": r.image_id, **r.values()} for r in self.rows],
            "mean": self.aggregate(),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path

    def write(self, path: str | Path, *, timestamp: bool = True) -> Path:
        """Write CSV or JSON depending on the file suffix."""
        if Path(path).suffix.lower() == ".json":
            return self.to_json(path, timestamp=timestamp)
        return self.to_csv(path, timestamp=timestamp)


def rank_metrics(
    table: Mapping[str, Mapping[str, float | None]],
) -> dict[str, dict[str, Rank]]:
    """
    Mark the best and second-best entry per metric column (higher is better).

    Args:
        table: label -> {column -> value}; missing values never rank.

    Returns:
        label -> {column -> "best" | "second" | ""}.
    """
    ranks: dict[str, dict[str, Rank]] = {label: {col: "" for col in METRIC_COLUMNS} for label in table}
    for col in METRIC_COLUMNS:
        scored = sorted(
            ((vals.get(col), label) for label, vals in table.items() if vals.get(col) is not None),
            key=lambda item: item[0],  # type: ignore[arg-type,return-value]
            reverse=True,
        )
        distinct = sorted({v for v, _ in scored}, reverse=True)  # type: ignore[type-var]
        for value, label in scored:
            if value == distinct[0]:
                ranks[label][col] = "best"
            elif len(distinct) > 1 and value == distinct[1]:
                ranks[label][col] = "second"
    return ranks


@dataclass
class ComparisonReport:
    """One aggregate row per configuration (ablation-table shape), with rankings."""

    entries: dict[str, dict[str, float | None]] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    reports: dict[str, MetricReport] = field(default_factory=dict)
    fingerprint: str = ""

    def add(self, tag: str, report: MetricReport, *, label: str = "") -> None:
        self.reports[tag] = report
        self.entries[tag] = report.aggregate()
        self.labels[tag] = label

    def add_error(self, tag: str, message: str, *, label: str = "") -> None:
        self.errors[tag] = message
        self.labels[tag] = label

    @property
    def tags(self) -> list[str]:
        return list(self.labels)

    def to_csv(self, path: str | Path, *, timestamp: bool = True) -> Path:
        path = Path(path)
        ranks = rank_metrics(self.entries)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# intensity_scale={INTENSITY_SCALE_TAG}\n")
            if self.fingerprint:
                fh.write(f"# fingerprint={self.fingerprint}\n")
            if timestamp:
                fh.write(f"# created={dt.datetime.now().isoformat(timespec='seconds')}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "label", *METRIC_COLUMNS, "best", "second", "error"])
            for tag in self.tags:
                values = self.entries.get(tag, {})
                best = [c for c, r in ranks.get(tag, {}).items() if r == "best"]
                second = [c for c, r in ranks.get(tag, {}).items() if r == "second"]
                writer.writerow(
                    [
                        tag,
                        self.labels.get(tag, ""),
                        *(_fmt(values.get(col)) for col in METRIC_COLUMNS),
                        " ".join(best),
                        " ".join(second),
                        self.errors.get(tag, ""),
                    ]
                )
        return path

    def to_json(self, path: str | Path, *, timestamp: bool = True) -> Path:
        path = Path(path)
        meta: dict[str, str] = {"intensity_scale": INTENSITY_SCALE_TAG, "fingerprint": self.fingerprint}
        if timestamp:
            meta["created"] = dt.datetime.now().isoformat(timespec="seconds")
        payload = {
            "meta": meta,
            "columns": list(METRIC_COLUMNS),
            "rows": {
                tag: {
                    "label": self.labels.get(tag, ""),
                    "mean": self.entries.get(tag),
                    "error": self.errors.get(tag),
                }
                for tag in self.tags
            },
            "ranks": rank_metrics(self.entries),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path

    def write(self, path: str | Path, *, timestamp: bool = True) -> Path:
        if Path(path).suffix.lower() == ".json":
            return self.to_json(path, timestamp=timestamp)
        return self.to_csv(path, timestamp=timestamp)


__all__ = [
    "as_gray",
    "metric_sd",
    "metric_ag",
    "metric_sf",
    "metric_scd",
    "metric_viff",
    "metric_ssim",
    "pearson",
    "gaussian_window",
    "vif_information",
    "MetricRow",
    "MetricReport",
    "ComparisonReport",
    "evaluate_pair",
    "rank_metrics",
]
