"""Command-line orchestration: gen-phantoms, train, infer, evaluate, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
All diagnostics go to stderr; artifact files carry no timestamps, so two
runs with identical flags and seeds are byte-identical. `infer` never reads
ground-truth labels. The fallback seed comes from OCT_TRIAGE_SEED.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .domain import TaskId, Thresholds
from .errors import OctTriageError, UsageError
from .evaluation import evaluate_dataset, load_report, render_report, save_report
from .manifest import parse_manifest
from .nn.network import ModelConfig, PRESET_BLOCKS, build_model
from .nn.serialize import save_weights
from .nn.training import TrainConfig, train
from .phantom import PhantomConfig, SiteProfile, generate_phantom_dataset
from .pipeline import (
    AggregationKind,
    AggregationPolicy,
    dump_predictions,
    load_model_bank,
    load_predictions,
)
from .workflow import (
    build_training_items,
    infer_manifest,
    load_quality_truth,
    stratified_split,
)

log = logging.getLogger("oct_triage")

CLI_TASKS = {
    "anomaly": TaskId.ANOMALY,
    "dry": TaskId.DRY_AMD,
    "wet": TaskId.WET_AMD,
    "dme": TaskId.DME,
    "quality": TaskId.QUALITY,
}

# Toy models default to a desk-scale input; the full-depth preset keeps the
# architecture's native size.
PRESET_DEFAULT_SIZE = {"toy": (64, 64), "vgg16": (224, 224)}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: A003 - argparse API
        raise UsageError(message)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"--size must look like 224x224, got {text!r}") from None


def _parse_agg(text: str) -> AggregationPolicy:
    if text == "max":
        return AggregationPolicy(AggregationKind.MAX)
    if text == "mean":
        return AggregationPolicy(AggregationKind.MEAN)
    if text.startswith("topk:"):
        try:
            return AggregationPolicy(AggregationKind.TOPK_MEAN, k=int(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise UsageError(f"--agg must be max, mean or topk:K, got {text!r}")


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("OCT_TRIAGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"OCT_TRIAGE_SEED must be an integer, got {env!r}") from None
    return 0


def _threshold(value: float) -> Thresholds:
    try:
        return Thresholds.uniform(value).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="run seed (fallback: OCT_TRIAGE_SEED, then 0)")
    common.add_argument("--threads", type=int, default=1, help="parallel volume inference")
    common.add_argument("--verbose", action="store_true", help="debug logging to stderr")

    parser = _Parser(prog="oct-triage", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-phantoms", parents=[common], help="generate a synthetic phantom cohort")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-class", type=int, required=True, help="volumes per class")
    p.add_argument("--bscans", type=int, required=True, help="B-scans per volume")
    p.add_argument("--size", default="64x64", help="B-scan size HxW")
    p.add_argument(
        "--site-profile", choices=[s.value.lower() for s in SiteProfile], default="clean"
    )
    p.add_argument("--ungradable-frac", type=float, default=0.0)
    p.add_argument("--lesion-scale", type=float, default=1.0)

    p = sub.add_parser("train", parents=[common], help="train one task model on a cohort")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=sorted(CLI_TASKS), required=True)
    p.add_argument("--preset", choices=sorted(PRESET_BLOCKS), default="toy")
    p.add_argument("--size", default=None, help="model input HxW (default per preset)")
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--min-delta", type=float, default=0.0)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--out", required=True, help="output .poct weight file")

    p = sub.add_parser("infer", parents=[common], help="score volumes; labels are never read")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", required=True, help="directory with the five .poct files")
    p.add_argument("--agg", default="max", help="max, mean, or topk:K")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--gate-quality", choices=["on", "off"], default="off")
    p.add_argument("--out", required=True, help="output predictions JSONL")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate predictions against ground truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output report JSON")

    p = sub.add_parser("report", parents=[common], help="render report(s) as a table")
    p.add_argument("--in", dest="inputs", required=True, help="comma-separated report JSON files")
    p.add_argument("--format", choices=["md", "csv", "json"], default="md")
    p.add_argument("--out", default=None, help="output file (default: stdout)")

    return parser


def _log_config(args: argparse.Namespace, seed: int) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "seed"}
    log.info("resolved configuration: subcommand=%s seed=%d %s", args.subcommand, seed, resolved)


def _cmd_gen_phantoms(args) -> int:
    seed = _resolve_seed(args.seed)
    h, w = _parse_size(args.size)
    config = PhantomConfig(
        n_volumes_per_class=args.per_class,
        bscans_per_volume=args.bscans,
        image_height=h,
        image_width=w,
        site_profile=SiteProfile(args.site_profile.upper()),
        lesion_intensity_scale=args.lesion_scale,
        ungradable_fraction=args.ungradable_frac,
        seed=seed,
    )
    _log_config(args, seed)
    manifest = generate_phantom_dataset(config, args.out)
    log.info(
        "wrote %s: %d volumes, %d B-scans", args.out, len(manifest.entries), manifest.n_bscans
    )
    return 0


def _cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    _log_config(args, seed)
    task = CLI_TASKS[args.task]
    size = _parse_size(args.size) if args.size else PRESET_DEFAULT_SIZE[args.preset]
    manifest = parse_manifest(args.manifest)
    base = Path(args.manifest).parent

    quality_truth = load_quality_truth(args.manifest) if task is TaskId.QUALITY else None
    items = build_training_items(manifest, base, task, size, quality_truth)
    train_items, val_items = stratified_split(items, args.val_frac, seed)
    log.info("task %s: %d train, %d val items", task.value, len(train_items), len(val_items))

    config = ModelConfig(input_size=size, conv_blocks=PRESET_BLOCKS[args.preset], seed=seed)
    tc = TrainConfig(
        max_epochs=args.epochs,
        patience=args.patience,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        min_delta=args.min_delta,
    )
    model = train(build_model(config, task), train_items, val_items, tc, augment_seed=seed)
    for epoch, stats in enumerate(model.history):
        log.info(
            "epoch %d: train_loss %.6f val_loss %.6f", epoch, stats.train_loss, stats.val_loss
        )
    save_weights(model, args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_infer(args) -> int:
    seed = _resolve_seed(args.seed)
    _log_config(args, seed)
    policy = _parse_agg(args.agg)
    thresholds = _threshold(args.threshold)
    bank = load_model_bank(args.models)
    manifest, predictions = infer_manifest(
        bank,
        args.manifest,
        policy,
        thresholds,
        gate_quality=args.gate_quality == "on",
        threads=args.threads,
    )
    dump_predictions(predictions, manifest.dataset_id, args.out)
    log.info("wrote %s: %d volume predictions", args.out, len(predictions))
    return 0


def _cmd_evaluate(args) -> int:
    seed = _resolve_seed(args.seed)
    _log_config(args, seed)
    manifest = parse_manifest(args.manifest)
    _dataset_id, predictions = load_predictions(args.preds)
    report = evaluate_dataset(predictions, manifest, _threshold(args.threshold))
    save_report(report, args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_report(args) -> int:
    seed = _resolve_seed(args.seed)
    _log_config(args, seed)
    reports = [load_report(p.strip()) for p in args.inputs.split(",") if p.strip()]
    document = render_report(reports, args.format)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(document)
    return 0


_COMMANDS = {
    "gen-phantoms": _cmd_gen_phantoms,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OctTriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
