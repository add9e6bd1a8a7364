"""
Paired-image ingestion, color handling, patch sampling and inference padding.

Tensors here are channels-first without a batch axis unless stated: a source image
is (C, H, W) with C = 1 (grayscale) or 3 (RGB), values in [0, 1]. Color handling
uses full-range ITU-R BT.601 YCbCr; the second source of a pair contributes only its
luminance to the network and its chroma is reinjected after fusion.

Dataset layout on disk is two parallel folders whose image files are matched by
stem (``a/0001.png`` <-> ``b/0001.png``), or a manifest file with one
``<path_a> <path_b>`` line per pair, relative to the manifest.
"""
from __future__ import annotations

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from scipy import ndimage
from torch.utils.data import IterableDataset, get_worker_info

from ._constants import (
    BT601_KB,
    BT601_KG,
    BT601_KR,
    CHROMA_OFFSET,
    DEFAULT_BATCH,
    DEFAULT_CROP,
    INTENSITY_MAX,
    SPATIAL_MULTIPLE,
)
from ._errors import ContractViolationError, DatasetError
from ._types import padded_size

logger = logging.getLogger(__name__)

Task = Literal["MIF", "IVIF"]

IMAGE_SUFFIXES: tuple[str, ...] = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")

_GRAY_MODES = frozenset({"1", "L", "LA", "I", "I;16", "F"})


def _require_rgb(img: torch.Tensor, where: str) -> None:
    if img.dim() < 3 or img.shape[-3] != 3:
        raise ContractViolationError(
            f"{where}: expected a 3-channel (..., 3, H, W) image, got {tuple(img.shape)}"
        )


def to_luminance(img: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Split an RGB image into full-range BT.601 Y, Cb, Cr planes.

    Args:
        img: (..., 3, H, W) in [0, 1].

    Returns:
        (Y, Cb, Cr), each (..., 1, H, W); gray pixels map to Cb = Cr = 0.5.
    """
    _require_rgb(img, "to_luminance")
    r, g, b = img.split(1, dim=-3)
    y = BT601_KR * r + BT601_KG * g + BT601_KB * b
    cb = CHROMA_OFFSET + (b - y) / (2.0 * (1.0 - BT601_KB))
    cr = CHROMA_OFFSET + (r - y) / (2.0 * (1.0 - BT601_KR))
    return y, cb, cr


def from_luminance(
    y: torch.Tensor, cb: torch.Tensor, cr: torch.Tensor, *, clamp: bool = True
) -> torch.Tensor:
    """
    Rebuild an RGB image from a (possibly fused) Y plane and source chroma.

    Exact inverse of `to_luminance`; output is clamped to [0, 1] unless `clamp` is False.

    Raises:
        ContractViolationError: Planes differ in shape.
    """
    if not (y.shape == cb.shape == cr.shape):
        raise ContractViolationError(
            f"from_luminance: shape mismatch Y={tuple(y.shape)} "
            f"Cb={tuple(cb.shape)} Cr={tuple(cr.shape)}"
        )
    r = y + 2.0 * (1.0 - BT601_KR) * (cr - CHROMA_OFFSET)
    b = y + 2.0 * (1.0 - BT601_KB) * (cb - CHROMA_OFFSET)
    g = (y - BT601_KR * r - BT601_KB * b) / BT601_KG
    rgb = torch.cat([r, g, b], dim=-3)
    return rgb.clamp(0.0, 1.0) if clamp else rgb


@dataclass(frozen=True)
class ImagePair:
    """
    Two spatially aligned source images.

    Attributes:
        modal_a: Grayscale source (MRI or IR), (1, H, W) in [0, 1].
        modal_b: Grayscale or color source (CT/PET/SPECT or VIS), (1 | 3, H, W).
        pair_id: Identifier, normally the shared file stem.
        task: ``MIF`` (medical) or ``IVIF`` (infrared-visible).
    """

    modal_a: torch.Tensor
    modal_b: torch.Tensor
    pair_id: str = ""
    task: Task = "MIF"

    def __post_init__(self) -> None:
        if self.modal_a.dim() != 3 or self.modal_a.shape[0] != 1:
            raise ContractViolationError(
                f"modal_a must be (1, H, W), got {tuple(self.modal_a.shape)}"
            )
        if self.modal_b.dim() != 3 or self.modal_b.shape[0] not in (1, 3):
            raise ContractViolationError(
                f"modal_b must be (1, H, W) or (3, H, W), got {tuple(self.modal_b.shape)}"
            )
        if self.modal_a.shape[-2:] != self.modal_b.shape[-2:]:
            raise ContractViolationError(
                f"pair {self.pair_id!r}: sources are not aligned, "
                f"{tuple(self.modal_a.shape[-2:])} vs {tuple(self.modal_b.shape[-2:])}"
            )
        if self.task not in ("MIF", "IVIF"):
            raise ValueError(f"task must be 'MIF' or 'IVIF', got {self.task!r}")

    @property
    def size(self) -> tuple[int, int]:
        return int(self.modal_a.shape[-2]), int(self.modal_a.shape[-1])

    @property
    def is_color(self) -> bool:
        return self.modal_b.shape[0] == 3

    def luminance_b(self) -> torch.Tensor:
        """I_B^Y: luminance of modal_b, or modal_b itself when it is grayscale."""
        if self.is_color:
            return to_luminance(self.modal_b)[0]
        return self.modal_b

    def stacked(self) -> torch.Tensor:
        """The network input for this pair: (2, H, W) = [modal_a, I_B^Y]."""
        return torch.cat([self.modal_a, self.luminance_b()], dim=0).float()


def worker_seed(seed: int, worker: int) -> int:
    """Independent RNG seed for prefetch worker `worker` of a run seeded with `seed`."""
    state = np.random.SeedSequence([seed, worker]).generate_state(1, dtype=np.uint64)
    return int(state[0] & 0x7FFF_FFFF_FFFF_FFFF)


class PatchSampler:
    """
    Draws uniformly random (pair, crop origin) triples from a fixed pair list.

    Every draw uses the sampler's own `torch.Generator`, so two samplers built with
    the same seed produce identical sequences.

    Raises:
        DatasetError: Empty pair list or a crop larger than some image.
    """

    def __init__(self, pairs: Sequence[ImagePair], crop: int = DEFAULT_CROP, *, seed: int = 0) -> None:
        if not pairs:
            raise DatasetError("cannot sample from an empty pair list")
        if crop < 1:
            raise DatasetError(f"crop must be >= 1, got {crop}")
        too_small = [p.pair_id or str(i) for i, p in enumerate(pairs) if min(p.size) < crop]
        if too_small:
            raise DatasetError(
                f"crop {crop} does not fit pairs {too_small[:5]}"
                + (" ..." if len(too_small) > 5 else "")
            )
        self.crop = crop
        self.seed = seed
        self._stacked = [p.stacked() for p in pairs]
        self._generator = torch.Generator().manual_seed(seed)

    def __len__(self) -> int:
        return len(self._stacked)

    def draw(self) -> tuple[int, int, int]:
        """Return (pair index, top, left) of the next crop."""
        idx = int(torch.randint(len(self._stacked), (1,), generator=self._generator))
        h, w = self._stacked[idx].shape[-2:]
        top = int(torch.randint(h - self.crop + 1, (1,), generator=self._generator))
        left = int(torch.randint(w - self.crop + 1, (1,), generator=self._generator))
        return idx, top, left

    def batch(self, size: int = DEFAULT_BATCH) -> torch.Tensor:
        """A (size, 2, crop, crop) batch of random crops."""
        if size < 1:
            raise DatasetError(f"batch must be >= 1, got {size}")
        crops = []
        for _ in range(size):
            idx, top, left = self.draw()
            crops.append(self._stacked[idx][:, top : top + self.crop, left : left + self.crop])
        return torch.stack(crops)


def sample_training_batch(
    pairs: Sequence[ImagePair],
    crop: int = DEFAULT_CROP,
    batch: int = DEFAULT_BATCH,
    seed: int = 0,
) -> torch.Tensor:
    """
    One training batch: `batch` random crops, channel 0 = modal_a, channel 1 = I_B^Y.

    Examples:
        >>> sample_training_batch(make_synthetic_pairs(2, 64), 64, 32, 0).shape
        torch.Size([32, 2, 64, 64])
    """
    return PatchSampler(pairs, crop, seed=seed).batch(batch)


class PatchDataset(IterableDataset):
    """
    Endless stream of training batches for a `torch.utils.data.DataLoader`.

    Use with ``batch_size=None``. Each prefetch worker samples from its own stream
    seeded by `worker_seed(seed, worker_id)`; the DataLoader visits workers round
    robin, so the batch sequence is fixed for a given seed and worker count.
    """

    def __init__(
        self,
        pairs: Sequence[ImagePair],
        crop: int = DEFAULT_CROP,
        batch: int = DEFAULT_BATCH,
        *,
        seed: int = 0,
    ) -> None:
        super().__init__()
        PatchSampler(pairs, crop, seed=seed)  # validates pairs and crop up front
        self.pairs = list(pairs)
        self.crop = crop
        self.batch = batch
        self.seed = seed

    def __iter__(self) -> Iterator[torch.Tensor]:
        info = get_worker_info()
        worker = info.id if info is not None else 0
        sampler = PatchSampler(self.pairs, self.crop, seed=worker_seed(self.seed, worker))
        while True:
            yield sampler.batch(self.batch)


@dataclass(frozen=True)
class PadRecord:
    """How an inference input was padded; `crop` undoes it."""

    height: int
    width: int
    pad_bottom: int
    pad_right: int

    @property
    def padded(self) -> bool:
        return bool(self.pad_bottom or self.pad_right)

    def crop(self, x: torch.Tensor) -> torch.Tensor:
        return x[..., : self.height, : self.width]


def pad_to_multiple(
    x: torch.Tensor, multiple: int = SPATIAL_MULTIPLE, *, min_size: int = 0
) -> tuple[torch.Tensor, PadRecord]:
    """Pad (B, C, H, W) at the bottom/right up to multiples of `multiple`, at least `min_size`.

    Reflect padding is used when the image is large enough for it, replicate
    padding otherwise.
    """
    h, w = int(x.shape[-2]), int(x.shape[-1])
    target_h = max(padded_size(h, multiple), padded_size(min_size, multiple))
    target_w = max(padded_size(w, multiple), padded_size(min_size, multiple))
    record = PadRecord(h, w, target_h - h, target_w - w)
    if not record.padded:
        return x, record
    mode = "reflect" if record.pad_bottom < h and record.pad_right < w else "replicate"
    return F.pad(x, (0, record.pad_right, 0, record.pad_bottom), mode=mode), record


def pad_for_inference(pair: ImagePair, *, min_size: int = 0) -> tuple[torch.Tensor, PadRecord]:
    """
    The (1, 2, H', W') network input for `pair`, with H' and W' rounded up to 16.

    Args:
        pair: Source pair of any size.
        min_size: Pad further so neither side is below this (see
            `LKCFUNet.min_input_size`).

    Examples:
        A 250x250 pair becomes 256x256 and ``record.crop`` restores 250x250.
    """
    return pad_to_multiple(pair.stacked().unsqueeze(0), min_size=min_size)


def list_images(directory: str | Path) -> list[Path]:
    """Image files directly inside `directory`, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_image(path: str | Path) -> torch.Tensor:
    """
    Decode an 8-bit image file to a float (C, H, W) tensor in [0, 1].

    Grayscale files give C = 1, everything else is converted to RGB (C = 3).
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img = img.convert("L") if img.mode in _GRAY_MODES else img.convert("RGB")
            arr = np.asarray(img, dtype=np.float32) / INTENSITY_MAX
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    return torch.from_numpy(arr)


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """(C, H, W) or (H, W) in [0, 1] -> HxW or HxWx3 uint8 array."""
    x = img.detach().float().cpu().clamp(0.0, 1.0)
    if x.dim() == 3:
        x = x[0] if x.shape[0] == 1 else x.permute(1, 2, 0)
    return (x * INTENSITY_MAX).round().to(torch.uint8).numpy()


def write_image(path: str | Path, img: torch.Tensor) -> Path:
    """Encode a [0, 1] image as an 8-bit file (format from the suffix, normally PNG)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)
    return path


def _collapse_gray(img: torch.Tensor) -> torch.Tensor:
    if img.shape[0] == 3 and torch.equal(img[0], img[1]) and torch.equal(img[1], img[2]):
        return img[:1]
    return img


def load_pair(path_a: str | Path, path_b: str | Path, *, pair_id: str = "", task: Task = "MIF") -> ImagePair:
    """
    Read one pair from disk.

    modal_a is reduced to luminance if stored in color; an RGB modal_b whose three
    channels are identical is treated as grayscale.
    """
    a = read_image(path_a)
    if a.shape[0] == 3:
        a = to_luminance(a)[0]
    b = _collapse_gray(read_image(path_b))
    if a.shape[-2:] != b.shape[-2:]:
        raise DatasetError(
            f"pair {pair_id or Path(path_a).stem!r} is not aligned: "
            f"{tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}"
        )
    return ImagePair(a, b, pair_id or Path(path_a).stem, task)


def load_pair_directory(dir_a: str | Path, dir_b: str | Path, task: Task = "MIF") -> list[ImagePair]:
    """
    Load all filename-matched pairs from two parallel folders.

    Raises:
        DatasetError: Either folder is empty, or some stem exists on only one side.
    """
    files_a = {p.stem: p for p in list_images(dir_a)}
    files_b = {p.stem: p for p in list_images(dir_b)}
    only_a = sorted(set(files_a) - set(files_b))
    only_b = sorted(set(files_b) - set(files_a))
    if only_a or only_b:
        raise DatasetError(
            f"unmatched files: only in {dir_a}: {only_a[:5]}; only in {dir_b}: {only_b[:5]}"
        )
    if not files_a:
        raise DatasetError(f"no images found in {dir_a} and {dir_b}")
    pairs = [load_pair(files_a[s], files_b[s], pair_id=s, task=task) for s in sorted(files_a)]
    logger.info("loaded %d %s pairs from %s / %s", len(pairs), task, dir_a, dir_b)
    return pairs


def load_manifest(path: str | Path, task: Task = "MIF") -> list[ImagePair]:
    """
    Load pairs listed in a two-column manifest.

    Each non-blank, non-``#`` line holds two paths separated by whitespace or a
    comma; relative paths resolve against the manifest's folder.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    root = path.parent
    pairs: list[ImagePair] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.replace(",", " ").split()
        if len(cols) != 2:
            raise DatasetError(f"{path}:{lineno}: expected two paths, got {len(cols)} columns")
        a, b = (root / c for c in cols)
        pairs.append(load_pair(a, b, task=task))
    if not pairs:
        raise DatasetError(f"manifest {path} lists no pairs")
    return pairs


def _normalize(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    return (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)


def make_synthetic_pairs(
    n: int, size: int = 64, seed: int = 0, *, task: Task = "MIF", color: bool = False
) -> list[ImagePair]:
    """
    Structured synthetic pairs for desk-scale runs.

    modal_a holds smooth Gaussian blobs (the intensity-dominant modality); modal_b
    holds hard-edged rectangles over a faint sinusoidal texture (the detail-dominant
    modality). With `color` the texture is tinted so modal_b is RGB.
    """
    if n < 1:
        raise DatasetError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    pairs: list[ImagePair] = []
    for i in range(n):
        blobs = np.zeros((size, size))
        for _ in range(int(rng.integers(2, 5))):
            cy, cx = rng.uniform(0, size, 2)
            sigma = rng.uniform(size / 16, size / 5)
            blobs += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        a = ndimage.gaussian_filter(_normalize(blobs), 1.0)

        freq = rng.uniform(0.15, 0.6)
        theta = rng.uniform(0, np.pi)
        detail = 0.15 * (1 + np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta))))
        for _ in range(int(rng.integers(3, 7))):
            top, left = rng.integers(0, size - size // 8, 2)
            h, w = rng.integers(size // 8, size // 2, 2)
            detail[top : top + h, left : left + w] += rng.uniform(0.3, 0.7)
        b = _normalize(detail)

        modal_a = torch.from_numpy(a.astype(np.float32))[None]
        if color:
            tint = rng.uniform(0.6, 1.0, 3)
            modal_b = torch.from_numpy(np.stack([b * t for t in tint]).astype(np.float32))
        else:
            modal_b = torch.from_numpy(b.astype(np.float32))[None]
        pairs.append(ImagePair(modal_a, modal_b, f"synthetic{i:03d}", task))
    return pairs


__all__ = [
    "Task",
    "IMAGE_SUFFIXES",
    "ImagePair",
    "PadRecord",
    "PatchSampler",
    "PatchDataset",
    "to_luminance",
    "from_luminance",
    "sample_training_batch",
    "pad_to_multiple",
    "pad_for_inference",
    "worker_seed",
    "list_images",
    "read_image",
    "write_image",
    "to_uint8",
    "load_pair",
    "load_pair_directory",
    "load_manifest",
    "make_synthetic_pairs",
]
