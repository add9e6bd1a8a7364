"""
Constants used throughout the lkcfunet package.
"""

from typing import Final

# Network geometry
INPUT_CHANNELS: Final[int] = 2  # spliced (modal_a, luminance of modal_b)
OUTPUT_CHANNELS: Final[int] = 1
NUM_STAGES: Final[int] = 4
SPATIAL_MULTIPLE: Final[int] = 16  # 2 ** NUM_STAGES downsamplings
BOTTLENECK_KERNEL: Final[int] = 3
MAX_KERNEL: Final[int] = 15

DEFAULT_INIT_KERNEL: Final[int] = 15
DEFAULT_KERNEL_SCHEDULE: Final[tuple[int, ...]] = (15, 7, 5, 5)
SMALL_KERNEL_SCHEDULE: Final[tuple[int, ...]] = (3, 3, 3, 3)
DEFAULT_CHANNEL_WIDTHS: Final[tuple[int, ...]] = (32, 64, 128, 256)
DESK_CHANNEL_WIDTHS: Final[tuple[int, ...]] = (8, 16, 32, 64)
DEFAULT_GN_GROUPS: Final[int] = 8
LKDC_GN_GROUPS: Final[int] = 1
LKDC_EXPANSION: Final[int] = 2
MPAFM_REDUCTION: Final[int] = 4
MPAFM_SPATIAL_KERNEL: Final[int] = 7

# SSIM (Gaussian window, stabilizers relative to the dynamic range)
SSIM_WINDOW: Final[int] = 11
SSIM_SIGMA: Final[float] = 1.5
SSIM_K1: Final[float] = 0.01
SSIM_K2: Final[float] = 0.03

# Metrics operate on 8-bit intensities
INTENSITY_MAX: Final[float] = 255.0
INTENSITY_SCALE_TAG: Final[str] = "0-255"
VIFF_SCALES: Final[int] = 4
VIFF_NOISE_VAR: Final[float] = 2.0
VIFF_EPS: Final[float] = 1e-10
METRIC_COLUMNS: Final[tuple[str, ...]] = ("SD", "AG", "SF", "SCD", "VIFF", "SSIM")

# ITU-R BT.601 full-range YCbCr
BT601_KR: Final[float] = 0.299
BT601_KG: Final[float] = 0.587
BT601_KB: Final[float] = 0.114
CHROMA_OFFSET: Final[float] = 0.5

# Training protocol
DEFAULT_EPOCHS: Final[int] = 1000
DESK_EPOCHS: Final[int] = 200
DEFAULT_LR: Final[float] = 1e-4
DEFAULT_BATCH: Final[int] = 32
DEFAULT_CROP: Final[int] = 64
EPOCH_REFERENCE_SIZE: Final[int] = 256  # image side used to define one epoch of crops
GRAD_CLIP_NORM: Final[float] = 10.0

# Analysis
DEFAULT_PATCH: Final[int] = 16
DEFAULT_HIST_BINS: Final[int] = 256
COSINE_EPS: Final[float] = 1e-8
BENCH_RESOLUTIONS: Final[tuple[tuple[int, int], ...]] = ((256, 256), (480, 640))

# Checkpoint container
CHECKPOINT_MAGIC: Final[bytes] = b"LKCF"
CHECKPOINT_VERSION: Final[int] = 1

DEVICE_ENV_VAR: Final[str] = "LKCFUNET_DEVICE"

__all__ = [
    "INPUT_CHANNELS",
    "OUTPUT_CHANNELS",
    "NUM_STAGES",
    "SPATIAL_MULTIPLE",
    "BOTTLENECK_KERNEL",
    "MAX_KERNEL",
    "DEFAULT_INIT_KERNEL",
    "DEFAULT_KERNEL_SCHEDULE",
    "SMALL_KERNEL_SCHEDULE",
    "DEFAULT_CHANNEL_WIDTHS",
    "DESK_CHANNEL_WIDTHS",
    "DEFAULT_GN_GROUPS",
    "LKDC_GN_GROUPS",
    "LKDC_EXPANSION",
    "MPAFM_REDUCTION",
    "MPAFM_SPATIAL_KERNEL",
    "SSIM_WINDOW",
    "SSIM_SIGMA",
    "SSIM_K1",
    "SSIM_K2",
    "INTENSITY_MAX",
    "INTENSITY_SCALE_TAG",
    "VIFF_SCALES",
    "VIFF_NOISE_VAR",
    "VIFF_EPS",
    "METRIC_COLUMNS",
    "BT601_KR",
    "BT601_KG",
    "BT601_KB",
    "CHROMA_OFFSET",
    "DEFAULT_EPOCHS",
    "DESK_EPOCHS",
    "DEFAULT_LR",
    "DEFAULT_BATCH",
    "DEFAULT_CROP",
    "EPOCH_REFERENCE_SIZE",
    "GRAD_CLIP_NORM",
    "DEFAULT_PATCH",
    "DEFAULT_HIST_BINS",
    "COSINE_EPS",
    "BENCH_RESOLUTIONS",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "DEVICE_ENV_VAR",
]
