"""End-to-end plumbing shared by the CLI and the test harness:
building per-task training sets from a cohort, deterministic splits,
and manifest-wide inference.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import TaskId, Thresholds, is_positive_for_task
from .errors import DegenerateSplit, MissingFile, SchemaViolation
from .manifest import DatasetManifest, load_volume, parse_manifest
from .nn.training import LabeledImage
from .pipeline import (
    AggregationPolicy,
    ModelBank,
    VolumePrediction,
    finalize_decision,
    score_volume,
)
from .preprocess import normalize

_MASK64 = (1 << 64) - 1


def load_quality_truth(manifest_path) -> dict[str, bool]:
    """Read the generator sidecar truth.json next to a manifest.

    Maps each B-scan path (relative to the manifest) to its gradable flag;
    quality-model training labels come from here.
    """
    sidecar = Path(manifest_path).parent / "truth.json"
    if not sidecar.is_file():
        raise MissingFile(
            f"quality training needs the generator sidecar, not found: {sidecar}"
        )
    doc = json.loads(sidecar.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise SchemaViolation("truth.json top level must be an object")
    flags = {}
    for rel, info in doc.items():
        if not isinstance(info, dict) or "gradable" not in info:
            raise SchemaViolation(f"truth.json entry {rel!r} lacks a gradable flag")
        flags[rel] = bool(info["gradable"])
    return flags


def build_training_items(
    manifest: DatasetManifest,
    base,
    task: TaskId,
    input_size: tuple[int, int],
    quality_truth: Optional[dict[str, bool]] = None,
) -> list[LabeledImage]:
    """One labeled canonical image per B-scan in the cohort.

    Disease tasks inherit the volume label; the quality task labels each
    B-scan gradable/ungradable from the generator sidecar.
    """
    if task is TaskId.QUALITY and quality_truth is None:
        raise ValueError("quality task needs quality_truth flags")
    items: list[LabeledImage] = []
    for entry in manifest.entries:
        volume = load_volume(entry, base, scanner_id=manifest.scanner_id)
        for scan, rel in zip(volume.bscans, entry.bscan_paths):
            if task is TaskId.QUALITY:
                if rel not in quality_truth:
                    raise SchemaViolation(f"truth.json has no entry for {rel}")
                label = quality_truth[rel]
            else:
                label = is_positive_for_task(volume.label, task)
            items.append(LabeledImage(image=normalize(scan, input_size), label=label))
    return items


def stratified_split(
    items: Sequence[LabeledImage], val_fraction: float, seed: int
) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Deterministic per-class split; every class with >= 2 items lands on
    both sides."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    rng = np.random.default_rng((seed & _MASK64, 0x5B17))
    train_idx: list[int] = []
    val_idx: list[int] = []
    for wanted in (False, True):
        idx = [i for i, item in enumerate(items) if bool(item.label) == wanted]
        if not idx:
            continue
        perm = rng.permutation(len(idx))
        n_val = int(np.ceil(val_fraction * len(idx)))
        n_val = min(max(n_val, 1), len(idx) - 1) if len(idx) >= 2 else 0
        for j, p in enumerate(perm):
            (val_idx if j < n_val else train_idx).append(idx[p])
    train_idx.sort()
    val_idx.sort()
    train = [items[i] for i in train_idx]
    val = [items[i] for i in val_idx]
    for name, split in (("train", train), ("val", val)):
        if len({bool(item.label) for item in split}) < 2:
            raise DegenerateSplit(f"{name} split contains a single class")
    return train, val


def run_inference(
    bank: ModelBank,
    manifest: DatasetManifest,
    base,
    policy: AggregationPolicy,
    thresholds: Thresholds,
    gate_quality: bool = False,
    threads: int = 1,
) -> list[VolumePrediction]:
    """Score every volume in the manifest; never reads ground-truth labels.

    Results are independent of the thread count: volumes are scored in
    manifest order regardless of scheduling.
    """

    def one(entry) -> VolumePrediction:
        volume = load_volume(entry, base, scanner_id=manifest.scanner_id)
        prediction = score_volume(
            bank, volume, policy, t_quality=thresholds.quality, gate_quality=gate_quality
        )
        return finalize_decision(prediction, thresholds)

    if threads <= 1:
        return [one(entry) for entry in manifest.entries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, manifest.entries))


def infer_manifest(
    bank: ModelBank,
    manifest_path,
    policy: AggregationPolicy,
    thresholds: Thresholds,
    gate_quality: bool = False,
    threads: int = 1,
) -> tuple[DatasetManifest, list[VolumePrediction]]:
    manifest = parse_manifest(manifest_path)
    base = Path(manifest_path).parent
    return manifest, run_inference(
        bank, manifest, base, policy, thresholds, gate_quality=gate_quality, threads=threads
    )
