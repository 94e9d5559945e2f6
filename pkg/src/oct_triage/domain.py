"""Canonical data types and the label/task taxonomy shared by all modules.

All types here are immutable after construction and safe to share between
concurrent workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GroundTruthLabel(enum.Enum):
    """Volume-level (or B-scan-level) diagnosis provided by a cohort owner."""

    NORMAL = "NORMAL"
    DRY_AMD = "DRY_AMD"
    WET_AMD = "WET_AMD"
    DME = "DME"
    # Positives that do not map onto the three pathology tasks; counts as
    # positive for the anomaly task and negative for all pathology tasks.
    ANOMALOUS_OTHER = "ANOMALOUS_OTHER"


class TaskId(enum.Enum):
    ANOMALY = "anomaly"
    DRY_AMD = "dry_amd"
    WET_AMD = "wet_amd"
    DME = "dme"
    GENERAL_AMD = "general_amd"
    QUALITY = "quality"


#: Tasks that have a ground-truth binarization (see is_positive_for_task).
LABEL_TASKS = (
    TaskId.ANOMALY,
    TaskId.GENERAL_AMD,
    TaskId.DRY_AMD,
    TaskId.WET_AMD,
    TaskId.DME,
)

#: Tasks backed by one trained model each.
MODEL_TASKS = (
    TaskId.ANOMALY,
    TaskId.DRY_AMD,
    TaskId.WET_AMD,
    TaskId.DME,
    TaskId.QUALITY,
)


class Pathology(enum.Enum):
    """Final pathology call of the decision layer."""

    NONE = "NONE"
    DRY_AMD = "DRY_AMD"
    WET_AMD = "WET_AMD"
    DME = "DME"


class ScoreVector(NamedTuple):
    """Independent per-task probabilities; no sum-to-one constraint."""

    anomaly: float
    dry_amd: float
    wet_amd: float
    dme: float

    def validate(self) -> "ScoreVector":
        for name, value in zip(self._fields, self):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"score {name}={value} outside [0, 1]")
        return self


class ClassDecision(NamedTuple):
    """Outcome of the fusion rules for one volume (or B-scan)."""

    anomaly_flag: bool
    pathology: Pathology
    general_amd_score: float


class Thresholds(NamedTuple):
    """Operating thresholds; one instance is used for an entire run."""

    anomaly: float = 0.5
    dry_amd: float = 0.5
    wet_amd: float = 0.5
    dme: float = 0.5
    quality: float = 0.5

    @classmethod
    def uniform(cls, t: float) -> "Thresholds":
        return cls(t, t, t, t, t)

    def validate(self) -> "Thresholds":
        for name, value in zip(self._fields, self):
            if not 0.0 < value < 1.0:
                raise ValueError(f"threshold {name}={value} outside (0, 1)")
        return self


@dataclass(frozen=True, eq=False)
class BScan:
    """One 2-D grayscale OCT slice.

    ``pixels`` is a uint8 array of shape (height, width); ``index`` is the
    0-based ordinal position within its volume.
    """

    pixels: np.ndarray
    index: int

    def __post_init__(self) -> None:
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.uint8 or p.ndim != 2:
            raise ValueError("pixels must be a 2-D uint8 array")
        h, w = p.shape
        if h < 8 or w < 8:
            raise ValueError(f"B-scan {h}x{w} below the 8x8 minimum")
        if self.index < 0:
            raise ValueError("index must be >= 0")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True, eq=False)
class OCTVolume:
    """Ordered stack of B-scans for one eye with a volume-level label."""

    volume_id: str
    bscans: tuple[BScan, ...]
    label: GroundTruthLabel
    site_id: str
    scanner_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "bscans", tuple(self.bscans))
        if not self.volume_id:
            raise ValueError("volume_id must be non-empty")
        if len(self.bscans) < 1:
            raise ValueError("a volume needs at least one B-scan")
        for expected, scan in enumerate(self.bscans):
            if scan.index != expected:
                raise ValueError(
                    f"B-scan indices must be 0..n-1 without gaps; "
                    f"got {scan.index} at position {expected}"
                )
        shapes = {scan.pixels.shape for scan in self.bscans}
        if len(shapes) != 1:
            raise ValueError(f"B-scans within one volume differ in size: {sorted(shapes)}")

    @property
    def n_bscans(self) -> int:
        return len(self.bscans)


def is_positive_for_task(label: GroundTruthLabel, task: TaskId) -> bool:
    """Binarize the 5-way ground-truth label for one of the binary tasks.

    The anomaly task is positive for every label except NORMAL; the general
    AMD task pools the dry and wet labels.
    """
    if task is TaskId.ANOMALY:
        return label is not GroundTruthLabel.NORMAL
    if task is TaskId.DRY_AMD:
        return label is GroundTruthLabel.DRY_AMD
    if task is TaskId.WET_AMD:
        return label is GroundTruthLabel.WET_AMD
    if task is TaskId.DME:
        return label is GroundTruthLabel.DME
    if task is TaskId.GENERAL_AMD:
        return label in (GroundTruthLabel.DRY_AMD, GroundTruthLabel.WET_AMD)
    raise ValueError(f"task {task} has no ground-truth binarization")
