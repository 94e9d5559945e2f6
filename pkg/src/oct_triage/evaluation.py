"""Dataset evaluation reports and their markdown/csv/json renderings.

One report row per dataset with columns General Anomaly, General AMD,
Dry AMD, Wet AMD, DME and Quality Rating (%). Tasks whose ground truth is
single-class in a dataset are omitted (rendered as blank cells). Reports
always echo the thresholds that produced the operating-point figures.
"""

from __future__ import annotations

import io
import csv as csv_module
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .domain import LABEL_TASKS, ScoreVector, TaskId, Thresholds, is_positive_for_task
from .errors import GranularityMismatch, MissingFile, MissingPrediction
from .manifest import DatasetManifest, Granularity
from .metrics import auroc, confusion_at_threshold
from .pipeline import VolumePrediction, dataset_quality_rating, pool_general_amd

TASK_DISPLAY_NAMES = {
    TaskId.ANOMALY: "General Anomaly",
    TaskId.GENERAL_AMD: "General AMD",
    TaskId.DRY_AMD: "Dry AMD",
    TaskId.WET_AMD: "Wet AMD",
    TaskId.DME: "DME",
}


@dataclass(frozen=True)
class TaskStats:
    auroc: float
    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    n_pos: int
    n_neg: int


@dataclass(frozen=True)
class EvaluationReport:
    dataset_id: str
    n_volumes: int
    n_bscans: int
    granularity: Granularity
    quality_rating: int
    quality_rating_raw: float
    thresholds: Thresholds
    tasks: dict[TaskId, TaskStats]


def _task_threshold(task: TaskId, t: Thresholds) -> float:
    if task is TaskId.GENERAL_AMD:
        # With max pooling, score >= min(t_dry, t_wet) iff either branch
        # crossed its own threshold, so the pooled call matches the
        # decision-level one whenever the two thresholds agree.
        return min(t.dry_amd, t.wet_amd)
    return getattr(t, task.value)


def _task_score(task: TaskId, scores: ScoreVector) -> float:
    if task is TaskId.GENERAL_AMD:
        return pool_general_amd(scores)
    return getattr(scores, task.value)


def evaluate_dataset(
    predictions: Sequence[VolumePrediction],
    manifest: DatasetManifest,
    thresholds: Thresholds,
) -> EvaluationReport:
    """Score predictions against the manifest's ground truth.

    At VOLUME granularity each volume contributes one (score, label) pair
    per task; at BSCAN granularity every B-scan does. Tasks with single-class
    ground truth are omitted from the report.
    """
    by_id = {p.volume_id: p for p in predictions}
    if len(by_id) != len(predictions):
        raise MissingPrediction("duplicate volume_id among predictions")
    entry_ids = {entry.volume_id for entry in manifest.entries}
    missing = sorted(entry_ids - set(by_id))
    if missing:
        raise MissingPrediction(f"no prediction for volume(s): {', '.join(missing)}")
    stray = sorted(set(by_id) - entry_ids)
    if stray:
        raise MissingPrediction(f"prediction(s) without manifest entry: {', '.join(stray)}")

    pairs: dict[TaskId, tuple[list[float], list[bool]]] = {
        task: ([], []) for task in LABEL_TASKS
    }
    gradable_flags: list[bool] = []

    for entry in manifest.entries:
        prediction = by_id[entry.volume_id]
        gradable_flags.extend(prediction.per_bscan_gradable)
        if manifest.granularity is Granularity.VOLUME:
            for task in LABEL_TASKS:
                scores, labels = pairs[task]
                scores.append(_task_score(task, prediction.volume_scores))
                labels.append(is_positive_for_task(entry.label, task))
        else:
            if len(prediction.per_bscan_scores) != len(entry.labels):
                raise GranularityMismatch(
                    f"volume {entry.volume_id}: {len(prediction.per_bscan_scores)} "
                    f"per-B-scan scores for {len(entry.labels)} B-scan labels"
                )
            for bscan_scores, bscan_label in zip(prediction.per_bscan_scores, entry.labels):
                for task in LABEL_TASKS:
                    scores, labels = pairs[task]
                    scores.append(_task_score(task, bscan_scores))
                    labels.append(is_positive_for_task(bscan_label, task))

    tasks: dict[TaskId, TaskStats] = {}
    for task in LABEL_TASKS:
        scores, labels = pairs[task]
        n_pos = sum(labels)
        n_neg = len(labels) - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        stats = confusion_at_threshold(scores, labels, _task_threshold(task, thresholds))
        tasks[task] = TaskStats(
            auroc=auroc(scores, labels),
            accuracy=stats.accuracy,
            sensitivity=stats.sensitivity,
            specificity=stats.specificity,
            n_pos=n_pos,
            n_neg=n_neg,
        )

    rating = dataset_quality_rating(gradable_flags)
    return EvaluationReport(
        dataset_id=manifest.dataset_id,
        n_volumes=len(manifest.entries),
        n_bscans=manifest.n_bscans,
        granularity=manifest.granularity,
        quality_rating=rating.percent,
        quality_rating_raw=rating.raw,
        thresholds=thresholds,
        tasks=tasks,
    )


def format_auroc(value: float) -> str:
    """Two decimals, three once the value reaches 0.995."""
    return f"{value:.3f}" if value >= 0.995 else f"{value:.2f}"


def _format_rate(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def _task_cell(report: EvaluationReport, task: TaskId) -> str:
    stats = report.tasks.get(task)
    if stats is None:
        return ""
    star = "*" if report.granularity is Granularity.BSCAN else ""
    parts = [f"ROC: {format_auroc(stats.auroc)}{star}", f"Acc: {stats.accuracy:.2f}"]
    if stats.sensitivity is not None:
        parts.append(f"Se: {stats.sensitivity:.2f}")
    if stats.specificity is not None:
        parts.append(f"Sp: {stats.specificity:.2f}")
    return " ".join(parts)


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "dataset_id": report.dataset_id,
        "n_volumes": report.n_volumes,
        "n_bscans": report.n_bscans,
        "granularity": report.granularity.value,
        "quality_rating": report.quality_rating,
        "quality_rating_raw": report.quality_rating_raw,
        "thresholds": dict(report.thresholds._asdict()),
        "tasks": {
            task.value: {
                "auroc": stats.auroc,
                "accuracy": stats.accuracy,
                "sensitivity": stats.sensitivity,
                "specificity": stats.specificity,
                "n_pos": stats.n_pos,
                "n_neg": stats.n_neg,
            }
            for task, stats in report.tasks.items()
        },
    }


def report_from_dict(obj: dict) -> EvaluationReport:
    tasks = {}
    for name, stats in obj["tasks"].items():
        tasks[TaskId(name)] = TaskStats(
            auroc=stats["auroc"],
            accuracy=stats["accuracy"],
            sensitivity=stats["sensitivity"],
            specificity=stats["specificity"],
            n_pos=stats["n_pos"],
            n_neg=stats["n_neg"],
        )
    return EvaluationReport(
        dataset_id=obj["dataset_id"],
        n_volumes=obj["n_volumes"],
        n_bscans=obj["n_bscans"],
        granularity=Granularity(obj["granularity"]),
        quality_rating=obj["quality_rating"],
        quality_rating_raw=obj["quality_rating_raw"],
        thresholds=Thresholds(**obj["thresholds"]),
        tasks=tasks,
    )


def save_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path) -> EvaluationReport:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"report file not found: {p}")
    return report_from_dict(json.loads(p.read_text(encoding="utf-8")))


def render_report(reports: Sequence[EvaluationReport], format: str = "md") -> str:
    """Render one row per dataset as markdown, csv, or json."""
    if not reports:
        raise ValueError("render_report needs at least one report")
    if format == "json":
        return json.dumps([report_to_dict(r) for r in reports], indent=2, sort_keys=True) + "\n"
    if format == "csv":
        return _render_csv(reports)
    if format == "md":
        return _render_markdown(reports)
    raise ValueError(f"unknown report format {format!r}; expected md, csv or json")


def _render_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    writer = csv_module.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "dataset_id",
            "task",
            "auroc",
            "accuracy",
            "sensitivity",
            "specificity",
            "quality_rating_pct",
            "n_volumes",
            "n_bscans",
            "granularity",
        ]
    )
    for report in reports:
        for task in LABEL_TASKS:
            stats = report.tasks.get(task)
            if stats is None:
                continue
            writer.writerow(
                [
                    report.dataset_id,
                    task.value,
                    format_auroc(stats.auroc),
                    f"{stats.accuracy:.2f}",
                    _format_rate(stats.sensitivity),
                    _format_rate(stats.specificity),
                    report.quality_rating,
                    report.n_volumes,
                    report.n_bscans,
                    report.granularity.value,
                ]
            )
    return buf.getvalue()


def _render_markdown(reports: Sequence[EvaluationReport]) -> str:
    header = (
        ["Dataset", "Volumes (B-scans)"]
        + [TASK_DISPLAY_NAMES[task] for task in LABEL_TASKS]
        + ["Quality Rating (%)"]
    )
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join([" --- "] * len(header)) + "|",
    ]
    any_bscan_level = False
    for report in reports:
        any_bscan_level |= report.granularity is Granularity.BSCAN
        row = [
            report.dataset_id,
            f"{report.n_volumes:,} ({report.n_bscans:,})",
        ]
        row += [_task_cell(report, task) for task in LABEL_TASKS]
        row.append(str(report.quality_rating))
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    thresholds = {r.thresholds for r in reports}
    for t in sorted(thresholds):
        lines.append(
            f"Operating thresholds: anomaly {t.anomaly}, dry AMD {t.dry_amd}, "
            f"wet AMD {t.wet_amd}, DME {t.dme}, quality {t.quality}"
        )
    if any_bscan_level:
        lines.append("")
        lines.append("\\* AUROC evaluated at B-scan level")
    return "\n".join(lines) + "\n"
