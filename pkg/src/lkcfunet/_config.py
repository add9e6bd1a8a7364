"""
Model and training configuration for lkcfunet.

Defines the `ModelConfig` and `TrainConfig` dataclasses, the ablation table that maps
each comparison row onto a `ModelConfig`, stable configuration fingerprints, and the
flat ``key = value`` file format used to store a model configuration on disk.

Config file schema (one ``key = value`` per line, ``#`` starts a comment):

    init_norm        = IN | BN | none
    body_norm        = GN | BN | none
    gn_groups_body   = positive int
    init_kernel      = odd int <= 15
    kernel_schedule  = four odd ints, comma separated
    channel_widths   = four positive ints, comma separated
    use_mpafm        = true | false
    use_lkdc         = true | false
    dropout_p        = float in [0, 1)
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, get_args

from ._constants import (
    DEFAULT_BATCH,
    DEFAULT_CHANNEL_WIDTHS,
    DEFAULT_CROP,
    DEFAULT_EPOCHS,
    DEFAULT_GN_GROUPS,
    DEFAULT_INIT_KERNEL,
    DEFAULT_KERNEL_SCHEDULE,
    DEFAULT_LR,
    DESK_CHANNEL_WIDTHS,
    DESK_EPOCHS,
    EPOCH_REFERENCE_SIZE,
    GRAD_CLIP_NORM,
    MAX_KERNEL,
    NUM_STAGES,
    SMALL_KERNEL_SCHEDULE,
)

InitNorm = Literal["IN", "BN", "none"]
BodyNorm = Literal["GN", "BN", "none"]
Optimizer = Literal["Adam"]
AblationRow = Literal["I", "II", "III", "IV", "V", "VI", "Ours"]

ABLATION_ROWS: tuple[AblationRow, ...] = get_args(AblationRow)

# Human-readable labels for comparative reports
ABLATION_LABELS: dict[AblationRow, str] = {
    "I": "all BN+3*3 Conv",
    "II": "all BN+LKC",
    "III": "BN+GN+LKC",
    "IV": "IN+GN+3*3 Conv",
    "V": "w/o Norm",
    "VI": "w/o MPAFM",
    "Ours": "IN+GN+LKC",
}


def _check_kernel(name: str, k: int) -> None:
    if not isinstance(k, int) or isinstance(k, bool):  # type: ignore # Run time type checker
        raise TypeError(f"{name} must be int, got {type(k).__name__}")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"{name} must be a positive odd int, got {k}")
    if k > MAX_KERNEL:
        raise ValueError(f"{name} must be <= {MAX_KERNEL}, got {k}")


@dataclass(frozen=True)
class ModelConfig:
    """
    Declarative description of one network variant.

    Every row of the ablation table is a `ModelConfig` (see `ablation_config`); the
    defaults describe the full model: IN in the initial block, GN in the body, the
    15/7/5/5 kernel schedule, LKDC blocks in the encoder and MPAFM-gated skips.

    Lists passed for `kernel_schedule` / `channel_widths` are stored as tuples so the
    config stays hashable and fingerprints are stable.
    """

    init_norm: InitNorm = "IN"
    body_norm: BodyNorm = "GN"
    gn_groups_body: int = DEFAULT_GN_GROUPS
    kernel_schedule: tuple[int, ...] = DEFAULT_KERNEL_SCHEDULE
    init_kernel: int = DEFAULT_INIT_KERNEL
    channel_widths: tuple[int, ...] = DEFAULT_CHANNEL_WIDTHS
    use_mpafm: bool = True
    use_lkdc: bool = True
    dropout_p: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel_schedule", tuple(self.kernel_schedule))
        object.__setattr__(self, "channel_widths", tuple(self.channel_widths))

        if self.init_norm not in get_args(InitNorm):
            raise ValueError(f"init_norm must be one of {get_args(InitNorm)}, got {self.init_norm!r}")
        if self.body_norm not in get_args(BodyNorm):
            raise ValueError(f"body_norm must be one of {get_args(BodyNorm)}, got {self.body_norm!r}")
        if not isinstance(self.gn_groups_body, int) or self.gn_groups_body < 1:  # type: ignore # Run time type checker
            raise ValueError(f"gn_groups_body must be a positive int, got {self.gn_groups_body}")
        if len(self.kernel_schedule) != NUM_STAGES:
            raise ValueError(
                f"kernel_schedule must have {NUM_STAGES} entries, got {len(self.kernel_schedule)}"
            )
        for k in self.kernel_schedule:
            _check_kernel("kernel_schedule entry", k)
        _check_kernel("init_kernel", self.init_kernel)
        if len(self.channel_widths) != NUM_STAGES:
            raise ValueError(
                f"channel_widths must have {NUM_STAGES} entries, got {len(self.channel_widths)}"
            )
        for w in self.channel_widths:
            if not isinstance(w, int) or w < 1:  # type: ignore # Run time type checker
                raise ValueError(f"channel_widths must contain positive ints, got {w}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def uses_batch_norm(self) -> bool:
        """True when any layer mixes statistics across the batch."""
        return self.init_norm == "BN" or self.body_norm == "BN"

    def replace(self, **changes: Any) -> ModelConfig:
        """Return a copy with `changes` applied (validated again)."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Plain JSON-compatible dict with lists for the tuple fields."""
        out = dataclasses.asdict(self)
        out["kernel_schedule"] = list(self.kernel_schedule)
        out["channel_widths"] = list(self.channel_widths)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_kv(self) -> str:
        """Serialize to the flat ``key = value`` format (see module docstring)."""
        lines = ["# lkcfunet model config"]
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> ModelConfig:
        """Parse the flat ``key = value`` format; unknown keys are an error."""
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        data: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in kinds:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            data[key] = _parse_value(key, value)
        return cls(**data)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return str(value)


_INT_KEYS = {"gn_groups_body", "init_kernel"}
_LIST_KEYS = {"kernel_schedule", "channel_widths"}
_BOOL_KEYS = {"use_mpafm", "use_lkdc"}
_FLOAT_KEYS = {"dropout_p"}


def _parse_value(key: str, value: str) -> Any:
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _LIST_KEYS:
            return tuple(int(v) for v in value.split(",") if v.strip())
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise ValueError(f"{key}: cannot parse {value!r}") from exc
    if key in _BOOL_KEYS:
        lowered = value.lower()
        if lowered not in ("true", "false"):
            raise ValueError(f"{key}: expected true/false, got {value!r}")
        return lowered == "true"
    return value


def save_model_config(cfg: ModelConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(cfg.to_kv(), encoding="utf-8")
    return path


def load_model_config(path: str | Path) -> ModelConfig:
    return ModelConfig.from_kv(Path(path).read_text(encoding="utf-8"))


def ablation_config(row: AblationRow | str) -> ModelConfig:
    """
    Return the `ModelConfig` for one ablation row.

    Rows:
        I    -- BN everywhere, 3x3 kernels everywhere
        II   -- BN everywhere, large-kernel schedule
        III  -- BN in the initial block, GN in the body, large kernels
        IV   -- IN + GN, 3x3 kernels
        V    -- no normalization anywhere, large kernels
        VI   -- full model without MPAFM (plain concatenation skips)
        Ours -- full model

    Raises:
        ValueError: Unknown row tag.
    """
    small = {"kernel_schedule": SMALL_KERNEL_SCHEDULE, "init_kernel": 3}
    base = ModelConfig()
    if row == "I":
        return base.replace(init_norm="BN", body_norm="BN", **small)
    if row == "II":
        return base.replace(init_norm="BN", body_norm="BN")
    if row == "III":
        return base.replace(init_norm="BN", body_norm="GN")
    if row == "IV":
        return base.replace(init_norm="IN", body_norm="GN", **small)
    if row == "V":
        return base.replace(init_norm="none", body_norm="none")
    if row == "VI":
        return base.replace(use_mpafm=False)
    if row == "Ours":
        return base
    raise ValueError(f"unknown ablation row {row!r}; expected one of {ABLATION_ROWS}")


def parse_rows(text: str) -> list[AblationRow]:
    """Parse a comma-separated row list such as ``"I,Ours"``."""
    rows: list[AblationRow] = []
    for tag in (t.strip() for t in text.split(",")):
        if not tag:
            continue
        if tag not in ABLATION_ROWS:
            raise ValueError(f"unknown ablation row {tag!r}; expected one of {ABLATION_ROWS}")
        rows.append(tag)  # type: ignore[arg-type]
    if not rows:
        raise ValueError("no ablation rows given")
    return rows


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization protocol.

    Defaults reproduce the full-scale recipe: 1000 epochs of Adam at a constant
    learning rate of 1e-4, batches of 32 random 64x64 crops. `desk_scale` shrinks the
    model widths and the epoch count so a run finishes on a CPU in minutes.

    One epoch is ``ceil(n_pairs * (256 / crop)**2 / batch)`` sampled batches; random
    crops decouple steps from the pair count. `max_steps` caps the total independently
    of epochs.
    """

    epochs: int = DEFAULT_EPOCHS
    lr: float = DEFAULT_LR
    batch: int = DEFAULT_BATCH
    crop: int = DEFAULT_CROP
    seed: int = 0
    optimizer: Optimizer = "Adam"
    checkpoint_every: int = 0
    desk_scale: bool = False
    max_steps: int | None = None
    workers: int = 0
    grad_clip: float = GRAD_CLIP_NORM

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.crop < 1:
            raise ValueError(f"crop must be >= 1, got {self.crop}")
        if self.optimizer != "Adam":
            raise ValueError(f"optimizer must be 'Adam', got {self.optimizer!r}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.workers < 0:
            raise ValueError(f"workers must be >= 0, got {self.workers}")

    @property
    def effective_epochs(self) -> int:
        """Epoch count after the desk-scale preset is applied."""
        return min(self.epochs, DESK_EPOCHS) if self.desk_scale else self.epochs

    def steps_per_epoch(self, n_pairs: int) -> int:
        crops_per_image = (EPOCH_REFERENCE_SIZE / self.crop) ** 2
        return max(1, math.ceil(n_pairs * crops_per_image / self.batch))

    def total_steps(self, n_pairs: int) -> int:
        total = self.effective_epochs * self.steps_per_epoch(n_pairs)
        return min(total, self.max_steps) if self.max_steps is not None else total

    def replace(self, **changes: Any) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def default_train_config() -> TrainConfig:
    """The full-scale training protocol (1000 epochs, Adam, lr 1e-4, 32 x 64x64 crops)."""
    return TrainConfig()


def resolve_model_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> ModelConfig:
    """Apply the desk-scale width preset when `train_cfg.desk_scale` is set."""
    if train_cfg.desk_scale:
        return model_cfg.replace(channel_widths=DESK_CHANNEL_WIDTHS)
    return model_cfg


def _digest(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def fingerprint(cfg: ModelConfig) -> str:
    """Stable sha256 of the canonicalized model configuration."""
    return _digest({"model": cfg.to_dict()})


def combined_fingerprint(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    """Stable sha256 of the canonicalized model + training configuration."""
    return _digest({"model": model_cfg.to_dict(), "train": train_cfg.to_dict()})


__all__ = [
    "InitNorm",
    "BodyNorm",
    "AblationRow",
    "ABLATION_ROWS",
    "ABLATION_LABELS",
    "ModelConfig",
    "TrainConfig",
    "ablation_config",
    "parse_rows",
    "default_train_config",
    "resolve_model_config",
    "fingerprint",
    "combined_fingerprint",
    "save_model_config",
    "load_model_config",
]
