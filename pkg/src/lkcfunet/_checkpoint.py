"""
Checkpoint files.

Layout:

    bytes 0-3   magic  b"LKCF"
    byte  4     format version (1)
    bytes 5-    torch.save() of a dict with keys
                fingerprint, model_config, train_config, model_state,
                optimizer_state, step

Writes go to a temporary file in the target folder that is then renamed over the
destination, so a reader never sees a partial checkpoint.
"""
from __future__ import annotations

import io
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch

from ._config import ModelConfig, TrainConfig, fingerprint
from ._constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from ._errors import CheckpointError, FingerprintMismatchError
from ._model import LKCFUNet

logger = logging.getLogger(__name__)

_HEADER_LEN = len(CHECKPOINT_MAGIC) + 1


@dataclass(frozen=True)
class Checkpoint:
    """A trained model's weights together with the configuration that produced them."""

    model_config: ModelConfig
    model_state: dict[str, torch.Tensor]
    train_config: TrainConfig | None = None
    optimizer_state: dict[str, Any] | None = None
    step: int = 0

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.model_config)

    def build_model(self, device: str | torch.device = "cpu") -> LKCFUNet:
        model = LKCFUNet(self.model_config)
        model.load_state_dict(self.model_state)
        return model.to(device).eval()

    @classmethod
    def from_model(
        cls,
        model: LKCFUNet,
        *,
        train_config: TrainConfig | None = None,
        optimizer: torch.optim.Optimizer | None = None,
        step: int = 0,
    ) -> Checkpoint:
        """Snapshot `model` (state tensors are copied to CPU)."""
        state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
        return cls(
            model_config=model.cfg,
            model_state=state,
            train_config=train_config,
            optimizer_state=optimizer.state_dict() if optimizer is not None else None,
            step=step,
        )


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    """Atomically write `checkpoint` to `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "fingerprint": checkpoint.fingerprint,
        "model_config": checkpoint.model_config.to_dict(),
        "train_config": checkpoint.train_config.to_dict() if checkpoint.train_config else None,
        "model_state": checkpoint.model_state,
        "optimizer_state": checkpoint.optimizer_state,
        "step": checkpoint.step,
    }
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(bytes([CHECKPOINT_VERSION]))
    torch.save(payload, buffer)

    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buffer.getvalue())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.info("wrote checkpoint %s (step %d)", path, checkpoint.step)
    return path


def load_checkpoint(path: str | Path, expected: ModelConfig | None = None) -> Checkpoint:
    """
    Read a checkpoint written by `save_checkpoint`.

    Args:
        path: Checkpoint file.
        expected: If given, the configuration the caller intends to run; the stored
            fingerprint must match it.

    Raises:
        CheckpointError: Missing, truncated or corrupt file, or unknown version.
        FingerprintMismatchError: Stored config differs from `expected`; the error
            names every differing field.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _HEADER_LEN or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not an lkcfunet checkpoint")
    version = raw[len(CHECKPOINT_MAGIC)]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        payload = torch.load(io.BytesIO(raw[_HEADER_LEN:]), map_location="cpu", weights_only=True)
        stored_cfg = ModelConfig.from_dict(payload["model_config"])
        train_dict = payload.get("train_config")
        checkpoint = Checkpoint(
            model_config=stored_cfg,
            model_state=payload["model_state"],
            train_config=TrainConfig(**train_dict) if train_dict else None,
            optimizer_state=payload.get("optimizer_state"),
            step=int(payload.get("step", 0)),
        )
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc

    if payload.get("fingerprint") != checkpoint.fingerprint:
        raise CheckpointError(f"{path}: stored fingerprint does not match stored config")
    if expected is not None and fingerprint(expected) != checkpoint.fingerprint:
        raise FingerprintMismatchError(expected.to_dict(), stored_cfg.to_dict())
    return checkpoint


def load_model(
    path: str | Path, expected: ModelConfig | None = None, *, device: str | torch.device = "cpu"
) -> LKCFUNet:
    """Load a checkpoint and return its model in eval mode."""
    return load_checkpoint(path, expected).build_model(device)


__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "load_model"]
