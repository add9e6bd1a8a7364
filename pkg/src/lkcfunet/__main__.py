"""
Command-line interface for lkcfunet.

Usage:
    lkcfunet train    (--src-a DIR --src-b DIR | --manifest FILE | --synthetic N) --out DIR
    lkcfunet fuse     --checkpoint FILE [--config FILE] (--src-a DIR --src-b DIR | --manifest FILE) --out DIR
    lkcfunet eval     --fused DIR --src-a DIR --src-b DIR --out report.csv|report.json
    lkcfunet ablate   --rows I,Ours [--desk-scale] (... training data ...) --out report.csv
    lkcfunet analyze-hist INPUT [INPUT ...] --out DIR [--bins N] [--plot]
    lkcfunet analyze-consistency --src-a FILE --src-b FILE --out FILE [--layer init]
    lkcfunet analyze-erf [--checkpoint FILE | --row TAG] --out FILE
    lkcfunet bench    [--checkpoint FILE] [--resolution HxW ...] --out FILE

Every command exits 0 on success. Failures print one JSON line
``{"error": ..., "exit_code": ..., "message": ...}`` on stderr and exit with the
code of the first matching entry in `EXIT_CODES`. The torch device comes from
``--device`` or the LKCFUNET_DEVICE environment variable (default ``cpu``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch

from . import __version__
from ._analysis import (
    bench_inference,
    effective_receptive_field,
    histogram_stats,
    local_consistency,
    modality_statistics,
    plot_histograms,
    write_modality_csv,
    write_timing_csv,
)
from ._checkpoint import load_model
from ._config import (
    ABLATION_ROWS,
    ModelConfig,
    TrainConfig,
    ablation_config,
    load_model_config,
    parse_rows,
    resolve_model_config,
    save_model_config,
)
from ._constants import BENCH_RESOLUTIONS, DEFAULT_HIST_BINS, DEFAULT_PATCH, DEVICE_ENV_VAR
from ._data import (
    ImagePair,
    list_images,
    load_manifest,
    load_pair,
    load_pair_directory,
    make_synthetic_pairs,
    pad_for_inference,
    read_image,
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
from ._fuse import fuse_pair, to_intensity
from ._metrics import MetricReport, MetricRow, evaluate_pair
from ._model import LKCFUNet, build_model
from ._train import run_ablation_matrix, train
from ._types import FeatureMap

logger = logging.getLogger("lkcfunet")


class UsageError(Exception):
    """Bad command line (unknown flag, missing argument)."""


# Checked in order; the first matching class decides the exit code.
EXIT_CODES: tuple[tuple[type[BaseException], int], ...] = (
    (UsageError, 2),
    (FileNotFoundError, 3),
    (DatasetError, 4),
    (FingerprintMismatchError, 5),
    (CheckpointError, 6),
    (RejectedInputError, 7),
    (ContractViolationError, 8),
    (DegenerateMetricError, 9),
    (NonFiniteLossError, 10),
    (FusionError, 11),
    (ValueError, 12),
)
INTERNAL_ERROR = 1


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return INTERNAL_ERROR


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file or directory: {p}")
    return p


def _resolution(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _device(args: argparse.Namespace) -> str:
    return args.device or os.environ.get(DEVICE_ENV_VAR, "cpu")


def _add_data_args(p: argparse.ArgumentParser, *, synthetic: bool = True) -> None:
    p.add_argument("--src-a", help="folder of modal_a images (MRI / IR)")
    p.add_argument("--src-b", help="folder of modal_b images (CT/PET/SPECT / VIS)")
    p.add_argument("--manifest", help="two-column pair manifest")
    p.add_argument("--task", choices=("MIF", "IVIF"), default="MIF")
    if synthetic:
        p.add_argument("--synthetic", type=int, metavar="N", help="use N synthetic pairs")
        p.add_argument("--synthetic-size", type=int, default=64)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--batch", type=int, default=defaults.batch)
    p.add_argument("--crop", type=int, default=defaults.crop)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--checkpoint-every", type=int, default=defaults.checkpoint_every)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=defaults.workers)
    p.add_argument("--desk-scale", action="store_true", help="widths 8/16/32/64, at most 200 epochs")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", type=_existing, help="trained checkpoint (default: fresh model)")
    p.add_argument("--config", type=_existing, help="model config the checkpoint must match")
    p.add_argument("--row", choices=ABLATION_ROWS, default="Ours", help="config for a fresh model")
    p.add_argument("--seed", type=int, default=0, help="init seed for a fresh model")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lkcfunet", description="Large-kernel UNet image fusion")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    common.add_argument("--device", help=f"torch device (default: ${DEVICE_ENV_VAR} or cpu)")
    common.add_argument(
        "--no-meta", action="store_true", help="omit timestamps and wall-clock timings from outputs"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model", parents=[common])
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--config", type=_existing, help="model config file (key = value)")
    p.add_argument("--row", choices=ABLATION_ROWS, help="start from an ablation row config")
    p.add_argument("--out", required=True, help="output folder for checkpoints and train.jsonl")

    p = sub.add_parser("fuse", help="fuse a pair folder", parents=[common])
    _add_data_args(p, synthetic=False)
    p.add_argument("--checkpoint", type=_existing, required=True)
    p.add_argument("--config", type=_existing, help="model config the checkpoint must match")
    p.add_argument("--out", required=True, help="output folder for fused PNGs")

    p = sub.add_parser("eval", help="score fused images", parents=[common])
    p.add_argument("--fused", type=_existing, required=True)
    p.add_argument("--src-a", type=_existing, required=True)
    p.add_argument("--src-b", type=_existing, required=True)
    p.add_argument("--out", required=True, help="report file (.csv or .json)")
    p.add_argument("--dataset", default="", help="dataset tag recorded in the report")
    p.add_argument("--fingerprint", default="", help="model fingerprint recorded in the report")
    p.add_argument("--jobs", type=int, default=1, help="parallel metric workers")

    p = sub.add_parser("ablate", help="train and evaluate ablation rows", parents=[common])
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--rows", default=",".join(ABLATION_ROWS))
    p.add_argument("--eval-src-a", help="eval folder for modal_a (default: training pairs)")
    p.add_argument("--eval-src-b", help="eval folder for modal_b")
    p.add_argument("--checkpoint-dir", help="keep per-row checkpoints here")
    p.add_argument("--out", required=True, help="comparative report (.csv or .json)")

    p = sub.add_parser("analyze-hist", help="intensity histograms and modality statistics", parents=[common])
    p.add_argument("inputs", nargs="+", type=_existing, help="image files or modality folders")
    p.add_argument("--bins", type=int, default=DEFAULT_HIST_BINS)
    p.add_argument("--plot", action="store_true", help="also write histograms.png")
    p.add_argument("--out", required=True, help="output folder")

    p = sub.add_parser("analyze-consistency", help="patch-wise feature-map consistency", parents=[common])
    _add_model_args(p)
    p.add_argument("--src-a", type=_existing, required=True, help="modal_a image file")
    p.add_argument("--src-b", type=_existing, required=True, help="modal_b image file")
    p.add_argument("--layer", default="init", help="feature map name (init, enc0, ..., dec0)")
    p.add_argument("--patch", type=int, default=DEFAULT_PATCH)
    p.add_argument("--out", required=True, help="text grid output")

    p = sub.add_parser("analyze-erf", help="effective receptive field of one layer", parents=[common])
    _add_model_args(p)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--layer", default="output")
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--out", required=True, help="weights grid output (text)")

    p = sub.add_parser("bench", help="time inference", parents=[common])
    _add_model_args(p)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--resolution", type=_resolution, action="append", help="HxW (repeatable)")
    p.add_argument("--out", required=True, help="timing report (.csv or .json)")

    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _pairs(args: argparse.Namespace) -> list[ImagePair]:
    if getattr(args, "synthetic", None):
        return make_synthetic_pairs(args.synthetic, args.synthetic_size, args.seed, task=args.task)
    if args.manifest:
        return load_manifest(_existing(args.manifest), task=args.task)
    if args.src_a and args.src_b:
        return load_pair_directory(_existing(args.src_a), _existing(args.src_b), task=args.task)
    raise UsageError("give --src-a and --src-b, --manifest, or --synthetic")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        batch=args.batch,
        crop=args.crop,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        desk_scale=args.desk_scale,
        max_steps=args.max_steps,
        workers=args.workers,
    )


def _expected(args: argparse.Namespace) -> ModelConfig | None:
    return load_model_config(args.config) if args.config else None


def _model(args: argparse.Namespace, device: str) -> LKCFUNet:
    if args.checkpoint:
        return load_model(args.checkpoint, _expected(args), device=device)
    return build_model(ablation_config(args.row), seed=args.seed).to(device)


def cmd_train(args: argparse.Namespace) -> None:
    pairs = _pairs(args)
    train_cfg = _train_config(args)
    if args.config:
        model_cfg = load_model_config(args.config)
    else:
        model_cfg = ablation_config(args.row or "Ours")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model_config(resolve_model_config(model_cfg, train_cfg), out / "model.cfg")
    result = train(
        model_cfg,
        train_cfg,
        pairs,
        checkpoint_dir=out,
        log_path=out / "train.jsonl",
        device=_device(args),
        timestamp=not args.no_meta,
    )
    losses = result.log.losses()
    print(f"trained {len(losses)} steps; final loss {losses[-1]:.4f}; checkpoint {out / 'final.ckpt'}")


def cmd_fuse(args: argparse.Namespace) -> None:
    device = _device(args)
    model = load_model(args.checkpoint, _expected(args), device=device)
    out = Path(args.out)
    pairs = _pairs(args)
    for pair in pairs:
        fuse_pair(model, pair, device=device).save(out / f"{pair.pair_id}.png")
    print(f"fused {len(pairs)} pairs into {out}")


def _gray_255(path: Path) -> np.ndarray:
    return to_intensity(read_image(path))


def _score(job: tuple[str, Path, Path, Path]) -> MetricRow:
    stem, f, a, b = job
    return evaluate_pair(_gray_255(f), _gray_255(a), _gray_255(b), image_id=stem)


def cmd_eval(args: argparse.Namespace) -> None:
    fused = {p.stem: p for p in list_images(args.fused)}
    src_a = {p.stem: p for p in list_images(args.src_a)}
    src_b = {p.stem: p for p in list_images(args.src_b)}
    missing = sorted(s for s in fused if s not in src_a or s not in src_b)
    if missing:
        raise DatasetError(f"fused images without both sources: {missing[:5]}")
    if not fused:
        raise DatasetError(f"no fused images in {args.fused}")
    jobs = [(s, fused[s], src_a[s], src_b[s]) for s in sorted(fused)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_score, jobs))
    else:
        rows = [_score(job) for job in jobs]
    report = MetricReport(rows=rows, dataset=args.dataset, fingerprint=args.fingerprint)
    path = report.write(args.out, timestamp=not args.no_meta)
    print(f"scored {len(rows)} images into {path}")


def cmd_ablate(args: argparse.Namespace) -> None:
    rows = parse_rows(args.rows)
    pairs = _pairs(args)
    if args.eval_src_a and args.eval_src_b:
        eval_set = load_pair_directory(_existing(args.eval_src_a), _existing(args.eval_src_b), task=args.task)
    else:
        eval_set = pairs
    report = run_ablation_matrix(
        rows,
        _train_config(args),
        pairs,
        eval_set,
        dataset_tag=args.task,
        device=_device(args),
        checkpoint_dir=args.checkpoint_dir,
    )
    path = report.write(args.out, timestamp=not args.no_meta)
    print(f"ablation rows {','.join(rows)} -> {path}")
    if report.errors:
        logger.warning("rows failed: %s", ", ".join(report.errors))


def cmd_analyze_hist(args: argparse.Namespace) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    singles = {}
    groups: dict[str, list[np.ndarray]] = {}
    for path in args.inputs:
        if path.is_dir():
            groups[path.name] = [_gray_255(p) for p in list_images(path)]
        else:
            stats = histogram_stats(_gray_255(path), args.bins)
            stats.to_csv(out / f"{path.stem}.hist.csv", name=path.name)
            singles[path.stem] = stats
    if groups:
        write_modality_csv(modality_statistics(groups, args.bins), out / "modalities.csv")
    if args.plot and singles:
        plot_histograms(singles, out / "histograms.png")
    print(f"wrote {len(singles)} histograms and {len(groups)} modality summaries to {out}")


def cmd_analyze_consistency(args: argparse.Namespace) -> None:
    device = _device(args)
    model = _model(args, device)
    pair = load_pair(args.src_a, args.src_b)
    x, record = pad_for_inference(pair, min_size=model.min_input_size)
    model.eval()
    with torch.no_grad():
        maps = model.feature_maps(x.to(device))
    if args.layer not in maps:
        raise UsageError(f"unknown layer {args.layer!r}; expected one of {sorted(maps)}")
    fm = maps[args.layer]
    if fm.stage == 0:
        fm = FeatureMap(record.crop(fm.data), fm.stage, fm.source, fm.name)
    cmap = local_consistency(fm, args.patch)
    cmap.write(args.out)
    print(f"{args.layer}: mean consistency {cmap.mean():.4f} over {cmap.grid[0]}x{cmap.grid[1]} patches")


def cmd_analyze_erf(args: argparse.Namespace) -> None:
    model = _model(args, _device(args))
    erf = effective_receptive_field(model, args.size, layer=args.layer, seed=args.seed)
    header = f"layer={erf.layer} center={erf.center[0]},{erf.center[1]} coverage={erf.coverage(args.threshold):.6f}"
    np.savetxt(args.out, erf.weights, fmt="%.6f", header=header)
    print(header)


def cmd_bench(args: argparse.Namespace) -> None:
    model = _model(args, _device(args))
    resolutions = args.resolution or list(BENCH_RESOLUTIONS)
    reports = [
        bench_inference(model, warmup=args.warmup, reps=args.reps, resolution=r, seed=args.seed)
        for r in resolutions
    ]
    out = Path(args.out)
    if out.suffix.lower() == ".json":
        out.write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    else:
        write_timing_csv(reports, out)
    for r in reports:
        print(f"{r.resolution[0]}x{r.resolution[1]}: {r.mean_ms:.2f} +- {r.std_ms:.2f} ms")


COMMANDS = {
    "train": cmd_train,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "analyze-hist": cmd_analyze_hist,
    "analyze-consistency": cmd_analyze_consistency,
    "analyze-erf": cmd_analyze_erf,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run one CLI command.

    Returns:
        0 on success, otherwise the exit code mapped from the raised error.
    """
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        COMMANDS[args.command](args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        code = exit_code_for(exc)
        if code == INTERNAL_ERROR:
            logger.debug("unexpected error", exc_info=True)
        print(
            json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)}),
            file=sys.stderr,
        )
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
