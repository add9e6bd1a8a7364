"""
Training loop, step log and ablation harness.

A run samples random crops (see `PatchSampler`), minimises `loss_total` with Adam at a
constant learning rate, and streams one JSON line per step to the TrainLog. Gradient
norms above `TrainConfig.grad_clip` are clipped and the event is logged. A non-finite
loss aborts the run with `NonFiniteLossError`, which carries the offending batch and
the last checkpoint known to be good.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import math
import time
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Any, NamedTuple

import torch
from torch.utils.data import DataLoader

from ._checkpoint import Checkpoint, save_checkpoint
from ._config import (
    ABLATION_LABELS,
    AblationRow,
    ModelConfig,
    TrainConfig,
    ablation_config,
    combined_fingerprint,
    resolve_model_config,
)
from ._constants import EPOCH_REFERENCE_SIZE, SPATIAL_MULTIPLE
from ._data import ImagePair, PatchDataset
from ._errors import DatasetError, FusionError, NonFiniteLossError, RejectedInputError
from ._fuse import evaluate_model
from ._losses import loss_total
from ._metrics import ComparisonReport
from ._model import build_model

logger = logging.getLogger(__name__)

EPOCH_DEFINITION = f"ceil(n_pairs * ({EPOCH_REFERENCE_SIZE} / crop)**2 / batch) sampled batches"


@dataclass(frozen=True)
class StepRecord:
    """Loss breakdown and timing of one optimizer step."""

    step: int
    epoch: int
    l_ssim: float
    l_int: float
    l_grad: float
    l_total: float
    wall_ms: float
    grad_norm: float
    clipped: bool = False

    def to_dict(self, *, timing: bool = True) -> dict[str, Any]:
        """JSON line payload; `timing=False` leaves out the wall-clock `wall_ms`."""
        obj = {"kind": "step", **asdict(self)}
        if not timing:
            del obj["wall_ms"]
        return obj


@dataclass
class TrainLog:
    """
    Per-step records of a run, optionally streamed as line-delimited JSON.

    The first line of a log file is a header object (``"kind": "header"``) holding the
    config fingerprint and the epoch definition. Steps follow as ``"kind": "step"``
    lines and every completed epoch adds an ``"kind": "epoch"`` line with its mean
    losses.

    With `timing` off the step lines carry no `wall_ms`, so two runs with the same
    seeds and data write identical files.

    Invariants:
        Step indices strictly increase and every recorded loss is finite.
    """

    header: dict[str, Any] = field(default_factory=dict)
    records: list[StepRecord] = field(default_factory=list)
    timing: bool = True
    _stream: IO[str] | None = field(default=None, repr=False)

    def open(self, path: str | Path) -> TrainLog:
        """Start streaming to `path` (truncating it) and write the header line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._stream = path.open("w", encoding="utf-8")
        self._emit({"kind": "header", **self.header})
        return self

    def close(self) -> None:
        if self._stream is not None:
            self._stream.close()
            self._stream = None

    def _emit(self, obj: dict[str, Any]) -> None:
        if self._stream is not None:
            self._stream.write(json.dumps(obj, sort_keys=True) + "\n")
            self._stream.flush()

    def append(self, record: StepRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(
                f"step {record.step} does not follow step {self.records[-1].step}"
            )
        if not all(math.isfinite(v) for v in (record.l_ssim, record.l_int, record.l_grad, record.l_total)):
            raise ValueError(f"step {record.step} has a non-finite loss")
        self.records.append(record)
        self._emit(record.to_dict(timing=self.timing))

    def end_epoch(self, epoch: int) -> dict[str, float]:
        """Emit and return the mean losses of `epoch`."""
        summary = self.epoch_means().get(epoch, {})
        self._emit({"kind": "epoch", "epoch": epoch, **summary})
        return summary

    def losses(self) -> list[float]:
        return [r.l_total for r in self.records]

    def epoch_means(self) -> dict[int, dict[str, float]]:
        grouped: dict[int, list[StepRecord]] = {}
        for r in self.records:
            grouped.setdefault(r.epoch, []).append(r)
        return {
            epoch: {
                key: sum(getattr(r, key) for r in recs) / len(recs)
                for key in ("l_ssim", "l_int", "l_grad", "l_total")
            }
            for epoch, recs in grouped.items()
        }

    @classmethod
    def read(cls, path: str | Path) -> TrainLog:
        """Parse a log file written by a training run."""
        log = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("kind", None)
            if kind == "header":
                log.header = obj
            elif kind == "step":
                obj.setdefault("wall_ms", 0.0)
                log.records.append(StepRecord(**obj))
        return log


class TrainResult(NamedTuple):
    checkpoint: Checkpoint
    log: TrainLog


def _batches(pairs: Sequence[ImagePair], cfg: TrainConfig) -> Iterator[torch.Tensor]:
    dataset = PatchDataset(pairs, cfg.crop, cfg.batch, seed=cfg.seed)
    if cfg.workers == 0:
        return iter(dataset)
    loader = DataLoader(dataset, batch_size=None, num_workers=cfg.workers)
    return iter(loader)


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset: Sequence[ImagePair],
    *,
    checkpoint_dir: str | Path | None = None,
    log_path: str | Path | None = None,
    device: str | torch.device = "cpu",
    timestamp: bool = True,
) -> TrainResult:
    """
    Train one model.

    Args:
        model_cfg: Network variant; widths are replaced by the desk preset when
            `train_cfg.desk_scale` is set.
        train_cfg: Optimization protocol.
        dataset: Training pairs.
        checkpoint_dir: Where to write ``step-XXXXXXX.ckpt`` every
            `train_cfg.checkpoint_every` steps, plus ``final.ckpt``. The initial
            state is written as step 0 so a failing run always has a good checkpoint.
        log_path: Stream the TrainLog here as line-delimited JSON.
        device: Torch device for the model and batches.
        timestamp: Record wall-clock data: the start time in the log header and
            `wall_ms` on every step line. Off, the log depends only on the inputs.

    Returns:
        The final checkpoint and the TrainLog.

    Raises:
        DatasetError: Empty dataset or crop larger than an image.
        RejectedInputError: Crop is not a multiple of 16 or is below the network's
            `min_input_size`.
        NonFiniteLossError: A step produced NaN/Inf loss.
    """
    if not dataset:
        raise DatasetError("training dataset is empty")
    cfg = resolve_model_config(model_cfg, train_cfg)
    n_pairs = len(dataset)
    total = train_cfg.total_steps(n_pairs)
    per_epoch = train_cfg.steps_per_epoch(n_pairs)

    model = build_model(cfg, seed=train_cfg.seed).to(device)
    if train_cfg.crop % SPATIAL_MULTIPLE or train_cfg.crop < model.min_input_size:
        raise RejectedInputError(
            f"crop {train_cfg.crop} cannot pass through this network",
            hint=f"use a multiple of {SPATIAL_MULTIPLE} that is at least {model.min_input_size}",
        )
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    batches = _batches(dataset, train_cfg)

    header: dict[str, Any] = {
        "fingerprint": combined_fingerprint(cfg, train_cfg),
        "model_config": cfg.to_dict(),
        "train_config": train_cfg.to_dict(),
        "n_pairs": n_pairs,
        "epoch_definition": EPOCH_DEFINITION,
        "steps_per_epoch": per_epoch,
        "total_steps": total,
    }
    if timestamp:
        header["created"] = dt.datetime.now().isoformat(timespec="seconds")

    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    initial = Checkpoint.from_model(model, train_config=train_cfg)
    last_good: Checkpoint | Path = initial

    logger.info(
        "training %d steps (%d per epoch, %d pairs) fingerprint=%s",
        total, per_epoch, n_pairs, header["fingerprint"][:12],
    )
    log = TrainLog(header=header, timing=timestamp)
    if log_path is not None:
        log.open(log_path)
    try:
        if ckpt_dir is not None:
            last_good = save_checkpoint(ckpt_dir / "step-0000000.ckpt", initial)
        for step in range(1, total + 1):
            epoch = (step - 1) // per_epoch
            batch = next(batches).to(device)
            started = time.perf_counter()

            optimizer.zero_grad(set_to_none=True)
            fused = model(batch)
            breakdown = loss_total(fused, batch[:, 0:1], batch[:, 1:2])
            if not breakdown.is_finite():
                raise NonFiniteLossError(
                    step=step, batch_id=step - 1, breakdown=breakdown.as_dict(), last_good=last_good
                )
            breakdown.l_total.backward()
            grad_norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip))
            clipped = grad_norm > train_cfg.grad_clip
            if clipped:
                logger.warning(
                    "step %d: gradient norm %.3f clipped to %.1f", step, grad_norm, train_cfg.grad_clip
                )
            optimizer.step()

            losses = breakdown.as_dict()
            log.append(
                StepRecord(
                    step=step,
                    epoch=epoch,
                    wall_ms=(time.perf_counter() - started) * 1e3,
                    grad_norm=grad_norm,
                    clipped=clipped,
                    **losses,
                )
            )
            if step % per_epoch == 0 or step == total:
                summary = log.end_epoch(epoch)
                logger.debug("epoch %d: %s", epoch, summary)
            if ckpt_dir is not None and train_cfg.checkpoint_every and step % train_cfg.checkpoint_every == 0:
                last_good = save_checkpoint(
                    ckpt_dir / f"step-{step:07d}.ckpt",
                    Checkpoint.from_model(model, train_config=train_cfg, optimizer=optimizer, step=step),
                )
    finally:
        log.close()

    final = Checkpoint.from_model(model, train_config=train_cfg, optimizer=optimizer, step=total)
    if ckpt_dir is not None:
        save_checkpoint(ckpt_dir / "final.ckpt", final)
    return TrainResult(final, log)


def run_ablation_matrix(
    rows: Iterable[AblationRow | str],
    train_cfg: TrainConfig,
    dataset: Sequence[ImagePair],
    eval_set: Sequence[ImagePair],
    *,
    dataset_tag: str = "",
    device: str | torch.device = "cpu",
    checkpoint_dir: str | Path | None = None,
) -> ComparisonReport:
    """
    Train and evaluate one model per ablation row.

    Every row sees the same training data, seed and eval set. A row whose training
    or evaluation fails is recorded with its error message and the remaining rows
    still run.

    Returns:
        Comparative report; ``report.reports[row]`` holds each row's MetricReport.

    Raises:
        ValueError: Unknown row tag (checked before any training starts).
    """
    configs = {row: ablation_config(row) for row in rows}
    report = ComparisonReport(fingerprint=combined_fingerprint(ModelConfig(), train_cfg))
    for row, cfg in configs.items():
        label = ABLATION_LABELS.get(row, row)  # type: ignore[call-overload]
        logger.info("ablation row %s (%s)", row, label)
        try:
            result = train(
                cfg,
                train_cfg,
                dataset,
                checkpoint_dir=Path(checkpoint_dir) / row if checkpoint_dir is not None else None,
                device=device,
            )
            model = result.checkpoint.build_model(device)
            report.add(row, evaluate_model(model, eval_set, dataset=dataset_tag, device=device), label=label)
        except (FusionError, RuntimeError) as exc:
            logger.error("ablation row %s failed: %s", row, exc)
            report.add_error(row, f"{type(exc).__name__}: {exc}", label=label)
    return report


__all__ = [
    "EPOCH_DEFINITION",
    "StepRecord",
    "TrainLog",
    "TrainResult",
    "train",
    "run_ablation_matrix",
]
