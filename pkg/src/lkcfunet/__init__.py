"""
lkcfunet: Large-kernel UNet for multimodal image fusion

Fuses two aligned source images (MRI/CT/PET/SPECT or infrared/visible) into one
image that keeps the intensity of the first and the texture of the second. Provides:
    - The fusion network with mixed instance/group normalization, large-kernel
      blocks and attention-gated skip connections
    - The SSIM + intensity + gradient training objective
    - The SD / AG / SF / SCD / VIFF / SSIM fusion-quality metrics
    - Paired-image loading, color handling and patch sampling
    - Training, checkpointing and an ablation harness
    - Histogram, feature-consistency, receptive-field and timing analyses

Exports:
    LKCFUNet       -- The fusion network
    ModelConfig    -- Network variant (normalization, kernels, widths, modules)
    TrainConfig    -- Optimization protocol
    ImagePair      -- Two aligned source images
    train          -- Train one model
    fuse_pair      -- Fuse one pair of any size
    evaluate_pair  -- Six metrics for one fused image
"""
from ._analysis import (
    ConsistencyMap,
    HistogramStats,
    ModalityStats,
    ReceptiveField,
    TimingReport,
    bench_inference,
    bench_presets,
    effective_receptive_field,
    erf_coverage,
    histogram_stats,
    local_consistency,
    modality_statistics,
    plot_histograms,
)
from ._checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint
from ._config import (
    ABLATION_LABELS,
    ABLATION_ROWS,
    AblationRow,
    ModelConfig,
    TrainConfig,
    ablation_config,
    combined_fingerprint,
    default_train_config,
    fingerprint,
    load_model_config,
    parse_rows,
    resolve_model_config,
    save_model_config,
)
from ._data import (
    ImagePair,
    PadRecord,
    PatchDataset,
    PatchSampler,
    from_luminance,
    load_manifest,
    load_pair,
    load_pair_directory,
    make_synthetic_pairs,
    pad_for_inference,
    read_image,
    sample_training_batch,
    to_luminance,
    write_image,
)
from ._errors import (
    CheckpointError,
    ContractViolationError,
    DatasetError,
    DegenerateMetricError,
    FingerprintMismatchError,
    FusionError,
    NonFiniteLossError,
    RejectedInputError,
)
from ._fuse import FusedResult, evaluate_model, fuse_pair
from ._losses import LossBreakdown, loss_grad, loss_int, loss_ssim, loss_total, ssim_index
from ._metrics import (
    ComparisonReport,
    MetricReport,
    MetricRow,
    evaluate_pair,
    metric_ag,
    metric_scd,
    metric_sd,
    metric_sf,
    metric_ssim,
    metric_viff,
    rank_metrics,
)
from ._model import LKCFUNet, build_model, model_forward
from ._train import StepRecord, TrainLog, TrainResult, run_ablation_matrix, train
from ._types import FeatureMap, ImageTensor

__version__ = "0.1.0"
__author__ = "Chuck Bass"

__all__ = [
    # Model
    "LKCFUNet",
    "build_model",
    "model_forward",
    "FeatureMap",
    "ImageTensor",
    # Configuration
    "ModelConfig",
    "TrainConfig",
    "AblationRow",
    "ABLATION_ROWS",
    "ABLATION_LABELS",
    "ablation_config",
    "parse_rows",
    "default_train_config",
    "resolve_model_config",
    "fingerprint",
    "combined_fingerprint",
    "save_model_config",
    "load_model_config",
    # Losses
    "ssim_index",
    "loss_ssim",
    "loss_int",
    "loss_grad",
    "loss_total",
    "LossBreakdown",
    # Metrics
    "metric_sd",
    "metric_ag",
    "metric_sf",
    "metric_scd",
    "metric_viff",
    "metric_ssim",
    "evaluate_pair",
    "rank_metrics",
    "MetricRow",
    "MetricReport",
    "ComparisonReport",
    # Data
    "ImagePair",
    "PadRecord",
    "PatchSampler",
    "PatchDataset",
    "to_luminance",
    "from_luminance",
    "sample_training_batch",
    "pad_for_inference",
    "read_image",
    "write_image",
    "load_pair",
    "load_pair_directory",
    "load_manifest",
    "make_synthetic_pairs",
    # Inference
    "FusedResult",
    "fuse_pair",
    "evaluate_model",
    # Training
    "train",
    "run_ablation_matrix",
    "TrainLog",
    "TrainResult",
    "StepRecord",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "load_model",
    # Analysis
    "histogram_stats",
    "modality_statistics",
    "plot_histograms",
    "local_consistency",
    "bench_inference",
    "bench_presets",
    "effective_receptive_field",
    "erf_coverage",
    "HistogramStats",
    "ModalityStats",
    "ConsistencyMap",
    "TimingReport",
    "ReceptiveField",
    # Errors
    "FusionError",
    "RejectedInputError",
    "ContractViolationError",
    "DegenerateMetricError",
    "DatasetError",
    "CheckpointError",
    "FingerprintMismatchError",
    "NonFiniteLossError",
]
