"""Decision layer: quality gating, B-scan scoring, volume aggregation,
AMD pooling, and fusion into a final classification.

The anomaly call depends only on the anomaly score and threshold. Among
pathologies crossing their thresholds: a lone survivor wins; wet beats dry
unconditionally; an AMD-side survivor against DME goes to the higher
probability, with the fixed precedence WET_AMD > DME > DRY_AMD on exact
ties. By default quality flags are report-only and every B-scan is scored.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .domain import (
    ClassDecision,
    MODEL_TASKS,
    OCTVolume,
    Pathology,
    ScoreVector,
    TaskId,
    Thresholds,
)
from .errors import EmptyDataset, MissingFile
from .nn.network import TrainedModel, forward_batch
from .nn.serialize import load_weights
from .preprocess import normalize

#: On-disk file names for the five models of a bank.
BANK_FILES = {task: f"{task.value}.poct" for task in MODEL_TASKS}

_TIE_PRECEDENCE = {Pathology.WET_AMD: 3, Pathology.DME: 2, Pathology.DRY_AMD: 1}


@dataclass(frozen=True)
class ModelBank:
    """The four disease classifiers plus the gradability model."""

    anomaly: TrainedModel
    dry_amd: TrainedModel
    wet_amd: TrainedModel
    dme: TrainedModel
    quality: TrainedModel

    def __post_init__(self) -> None:
        sizes = set()
        for task in MODEL_TASKS:
            model = getattr(self, task.value)
            if model.task is not task:
                raise ValueError(
                    f"bank field {task.value} holds a model trained for task {model.task.value}"
                )
            sizes.add(model.config.input_size)
        if len(sizes) != 1:
            raise ValueError(f"bank models disagree on input size: {sorted(sizes)}")

    @property
    def input_size(self) -> tuple[int, int]:
        return self.anomaly.config.input_size


def load_model_bank(directory) -> ModelBank:
    """Load {anomaly,dry_amd,wet_amd,dme,quality}.poct from a directory."""
    directory = Path(directory)
    models = {}
    for task, name in BANK_FILES.items():
        path = directory / name
        if not path.is_file():
            raise MissingFile(f"model file not found: {path}")
        models[task.value] = load_weights(path)
    return ModelBank(**models)


class AggregationKind(enum.Enum):
    MAX = "max"
    MEAN = "mean"
    TOPK_MEAN = "topk_mean"


@dataclass(frozen=True)
class AggregationPolicy:
    kind: AggregationKind = AggregationKind.MAX
    k: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is AggregationKind.TOPK_MEAN:
            if self.k is None or self.k < 1:
                raise ValueError("TOPK_MEAN needs k >= 1")
        elif self.k is not None:
            raise ValueError(f"k is only valid for TOPK_MEAN, not {self.kind.value}")


def aggregate_scores(values: Sequence[float], policy: AggregationPolicy) -> float:
    """Fold per-B-scan scores into one volume score, permutation-invariantly.

    Values are sorted before any summation so the result is bit-identical
    under reordering of the B-scans.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    if arr.size == 0:
        raise EmptyDataset("cannot aggregate an empty score list")
    if policy.kind is AggregationKind.MAX:
        return float(arr[0])
    if policy.kind is AggregationKind.MEAN:
        return float(arr.mean())
    if policy.k > arr.size:
        raise ValueError(f"k={policy.k} exceeds the B-scan count {arr.size}")
    return float(arr[: policy.k].mean())


class QualityRating(NamedTuple):
    percent: int    # rounded to nearest, ties away from zero
    raw: float      # exact percentage


def dataset_quality_rating(gradable_flags: Sequence[bool]) -> QualityRating:
    """Percentage of gradable B-scans in a dataset."""
    flags = list(gradable_flags)
    if not flags:
        raise EmptyDataset("quality rating needs at least one B-scan flag")
    raw = 100.0 * sum(1 for f in flags if f) / len(flags)
    return QualityRating(percent=int(np.floor(raw + 0.5)), raw=raw)


def grade_quality(bank: ModelBank, img: np.ndarray, t_quality: float) -> tuple[float, bool]:
    """Quality score for one canonical image; gradable iff score >= threshold."""
    score = float(forward_batch(bank.quality, img[None])[0])
    return score, score >= t_quality


def pool_general_amd(v: ScoreVector, mode: str = "max") -> float:
    """Pool the dry and wet scores into one general-AMD score.

    "max" keeps the larger score; "noisy_or" uses 1 - (1-dry)(1-wet).
    """
    if mode == "max":
        return max(v.dry_amd, v.wet_amd)
    if mode == "noisy_or":
        return 1.0 - (1.0 - v.dry_amd) * (1.0 - v.wet_amd)
    raise ValueError(f"unknown pooling mode {mode!r}")


def classify(v: ScoreVector, t: Thresholds, pool_mode: str = "max") -> ClassDecision:
    """Apply the fusion rules to one score vector.

    The anomaly flag is independent of the pathology scores. Pathologies
    scoring at or above their thresholds compete as described in the module
    docstring.
    """
    v.validate()
    anomaly_flag = v.anomaly >= t.anomaly

    survivors = {
        pathology: score
        for pathology, score, threshold in (
            (Pathology.DRY_AMD, v.dry_amd, t.dry_amd),
            (Pathology.WET_AMD, v.wet_amd, t.wet_amd),
            (Pathology.DME, v.dme, t.dme),
        )
        if score >= threshold
    }
    if Pathology.DRY_AMD in survivors and Pathology.WET_AMD in survivors:
        del survivors[Pathology.DRY_AMD]
    if not survivors:
        pathology = Pathology.NONE
    else:
        pathology = max(survivors, key=lambda p: (survivors[p], _TIE_PRECEDENCE[p]))

    return ClassDecision(
        anomaly_flag=anomaly_flag,
        pathology=pathology,
        general_amd_score=pool_general_amd(v, pool_mode),
    )


@dataclass(frozen=True)
class VolumePrediction:
    volume_id: str
    per_bscan_scores: tuple[ScoreVector, ...]
    per_bscan_gradable: tuple[bool, ...]
    volume_scores: ScoreVector
    general_amd_score: float
    decision: Optional[ClassDecision] = None

    def __post_init__(self) -> None:
        if len(self.per_bscan_scores) != len(self.per_bscan_gradable):
            raise ValueError("per-B-scan score and gradability lists differ in length")
        if not self.per_bscan_scores:
            raise ValueError("a prediction needs at least one B-scan")

    @property
    def gradable_fraction(self) -> float:
        return sum(1 for f in self.per_bscan_gradable if f) / len(self.per_bscan_gradable)


def score_volume(
    bank: ModelBank,
    volume: OCTVolume,
    policy: AggregationPolicy = AggregationPolicy(),
    t_quality: float = 0.5,
    gate_quality: bool = False,
) -> VolumePrediction:
    """Score every B-scan with all four task models and aggregate per policy.

    Quality flags are always computed. With gate_quality=True, ungradable
    B-scans are excluded from aggregation unless every B-scan is ungradable,
    in which case all are used. The decision field is left unfilled; see
    finalize_decision.

    Each B-scan is scored as its own single-item batch, so its scores are
    bit-identical no matter how the volume is ordered or regrouped.
    """
    imgs = [normalize(scan, bank.input_size) for scan in volume.bscans]
    task_scores = {
        task: np.array(
            [forward_batch(getattr(bank, task.value), img[None])[0] for img in imgs]
        )
        for task in MODEL_TASKS
    }
    per_bscan = tuple(
        ScoreVector(
            anomaly=float(task_scores[TaskId.ANOMALY][i]),
            dry_amd=float(task_scores[TaskId.DRY_AMD][i]),
            wet_amd=float(task_scores[TaskId.WET_AMD][i]),
            dme=float(task_scores[TaskId.DME][i]),
        )
        for i in range(len(volume.bscans))
    )
    gradable = tuple(bool(q >= t_quality) for q in task_scores[TaskId.QUALITY])

    if gate_quality and any(gradable):
        keep = [i for i, ok in enumerate(gradable) if ok]
    else:
        keep = list(range(len(per_bscan)))
    volume_scores = ScoreVector(
        anomaly=aggregate_scores([per_bscan[i].anomaly for i in keep], policy),
        dry_amd=aggregate_scores([per_bscan[i].dry_amd for i in keep], policy),
        wet_amd=aggregate_scores([per_bscan[i].wet_amd for i in keep], policy),
        dme=aggregate_scores([per_bscan[i].dme for i in keep], policy),
    )
    return VolumePrediction(
        volume_id=volume.volume_id,
        per_bscan_scores=per_bscan,
        per_bscan_gradable=gradable,
        volume_scores=volume_scores,
        general_amd_score=pool_general_amd(volume_scores),
    )


def finalize_decision(
    prediction: VolumePrediction, t: Thresholds, pool_mode: str = "max"
) -> VolumePrediction:
    """Fill the decision field from the volume scores and thresholds."""
    decision = classify(prediction.volume_scores, t, pool_mode)
    return replace(
        prediction,
        general_amd_score=decision.general_amd_score,
        decision=decision,
    )


def prediction_to_json(prediction: VolumePrediction, dataset_id: str) -> dict:
    if prediction.decision is None:
        raise ValueError("prediction has no decision; call finalize_decision first")
    v = prediction.volume_scores
    return {
        "volume_id": prediction.volume_id,
        "dataset_id": dataset_id,
        "scores": {
            "anomaly": v.anomaly,
            "dry_amd": v.dry_amd,
            "wet_amd": v.wet_amd,
            "dme": v.dme,
            "general_amd": prediction.general_amd_score,
        },
        "decision": {
            "anomaly_flag": prediction.decision.anomaly_flag,
            "pathology": prediction.decision.pathology.value,
        },
        "gradable_fraction": prediction.gradable_fraction,
        "bscan_scores": [
            {"anomaly": s.anomaly, "dry_amd": s.dry_amd, "wet_amd": s.wet_amd, "dme": s.dme}
            for s in prediction.per_bscan_scores
        ],
        "bscan_gradable": list(prediction.per_bscan_gradable),
    }


def dump_predictions(predictions: Sequence[VolumePrediction], dataset_id: str, path) -> None:
    """Write one JSON object per volume, one per line."""
    lines = [
        json.dumps(prediction_to_json(p, dataset_id), sort_keys=True) for p in predictions
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_predictions(path) -> tuple[str, list[VolumePrediction]]:
    """Read a predictions JSONL file; returns (dataset_id, predictions)."""
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"predictions file not found: {p}")
    predictions = []
    dataset_id = ""
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p}:{line_no}: not valid JSON: {exc}") from exc
        dataset_id = obj["dataset_id"]
        scores = obj["scores"]
        volume_scores = ScoreVector(
            scores["anomaly"], scores["dry_amd"], scores["wet_amd"], scores["dme"]
        )
        decision = ClassDecision(
            anomaly_flag=bool(obj["decision"]["anomaly_flag"]),
            pathology=Pathology(obj["decision"]["pathology"]),
            general_amd_score=scores["general_amd"],
        )
        per_bscan = tuple(
            ScoreVector(s["anomaly"], s["dry_amd"], s["wet_amd"], s["dme"])
            for s in obj["bscan_scores"]
        )
        predictions.append(
            VolumePrediction(
                volume_id=obj["volume_id"],
                per_bscan_scores=per_bscan,
                per_bscan_gradable=tuple(bool(g) for g in obj["bscan_gradable"]),
                volume_scores=volume_scores,
                general_amd_score=scores["general_amd"],
                decision=decision,
            )
        )
    return dataset_id, predictions
