"""
Exception hierarchy for lkcfunet.

Every error raised on purpose by the package derives from `FusionError` and, where
it describes bad input, also from the matching builtin (ValueError / RuntimeError)
so callers that only know the builtins keep working.
"""
from __future__ import annotations

from collections.abc import Mapping
from typing import Any


class FusionError(Exception):
    """Base class for all lkcfunet errors."""


class RejectedInputError(FusionError, ValueError):
    """Input is well-typed but cannot be processed (e.g. spatial dims too small)."""

    def __init__(self, message: str, *, hint: str | None = None) -> None:
        self.hint = hint
        super().__init__(f"{message} ({hint})" if hint else message)


class ContractViolationError(FusionError, ValueError):
    """Shapes or channel counts do not satisfy an operation's contract."""


class DegenerateMetricError(FusionError, ValueError):
    """A metric is undefined for the input (zero-variance correlation)."""


class DatasetError(FusionError, ValueError):
    """Dataset is empty, pairs are mismatched, or a crop does not fit."""


class CheckpointError(FusionError):
    """Checkpoint file is corrupt, truncated, or of an unknown version."""


class FingerprintMismatchError(CheckpointError):
    """Checkpoint was produced by a model configuration that differs from the requested one."""

    def __init__(self, expected: Mapping[str, Any], found: Mapping[str, Any]) -> None:
        self.fields: list[str] = sorted(
            key for key in set(expected) | set(found) if expected.get(key) != found.get(key)
        )
        diff = "; ".join(
            f"{key}: checkpoint={found.get(key)!r} requested={expected.get(key)!r}"
            for key in self.fields
        )
        super().__init__(f"config fingerprint mismatch on {', '.join(self.fields)} [{diff}]")


class NonFiniteLossError(FusionError, RuntimeError):
    """Training produced a NaN/Inf loss; the run was aborted."""

    def __init__(
        self,
        *,
        step: int,
        batch_id: int,
        breakdown: Mapping[str, float],
        last_good: Any = None,
    ) -> None:
        self.step = step
        self.batch_id = batch_id
        self.breakdown = dict(breakdown)
        # Checkpoint (or checkpoint path) from before the failing step.
        self.last_good = last_good
        super().__init__(
            f"non-finite loss at step {step} (batch {batch_id}): {self.breakdown}"
        )


__all__ = [
    "FusionError",
    "RejectedInputError",
    "ContractViolationError",
    "DegenerateMetricError",
    "DatasetError",
    "CheckpointError",
    "FingerprintMismatchError",
    "NonFiniteLossError",
]
