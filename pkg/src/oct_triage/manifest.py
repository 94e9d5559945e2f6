"""Cohort manifests and volume loading.

A manifest is a UTF-8 JSON document with top-level keys exactly
``dataset_id``, ``scanner_id``, ``label_granularity`` ("VOLUME" | "BSCAN")
and ``entries``. Each entry carries ``volume_id``, ``site_id``,
``bscan_paths`` and either ``label`` (VOLUME granularity) or ``labels``
(BSCAN granularity, one per path). Unknown keys are schema violations.
B-scan paths are relative to the manifest location; images are 8-bit
single-channel PNG.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .domain import BScan, GroundTruthLabel, OCTVolume
from .errors import (
    DanglingPath,
    DecodeError,
    HeterogeneousSize,
    MissingFile,
    SchemaViolation,
)


class Granularity(enum.Enum):
    VOLUME = "VOLUME"
    BSCAN = "BSCAN"


@dataclass(frozen=True)
class ManifestEntry:
    volume_id: str
    site_id: str
    bscan_paths: tuple[str, ...]
    label: Optional[GroundTruthLabel] = None
    labels: Optional[tuple[GroundTruthLabel, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "bscan_paths", tuple(self.bscan_paths))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        if not self.volume_id:
            raise SchemaViolation("entry field volume_id must be non-empty")
        if len(self.bscan_paths) < 1:
            raise SchemaViolation(f"entry {self.volume_id}: bscan_paths must be non-empty")
        if (self.label is None) == (self.labels is None):
            raise SchemaViolation(
                f"entry {self.volume_id}: exactly one of label/labels must be set"
            )
        if self.labels is not None and len(self.labels) != len(self.bscan_paths):
            raise SchemaViolation(
                f"entry {self.volume_id}: labels has {len(self.labels)} items "
                f"for {len(self.bscan_paths)} bscan_paths"
            )


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    scanner_id: str
    granularity: Granularity
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.dataset_id:
            raise SchemaViolation("dataset_id must be non-empty")
        if len(self.entries) < 1:
            raise SchemaViolation("manifest must contain at least one entry")
        for entry in self.entries:
            wants_labels = self.granularity is Granularity.BSCAN
            if wants_labels and entry.labels is None:
                raise SchemaViolation(
                    f"entry {entry.volume_id}: BSCAN granularity requires labels"
                )
            if not wants_labels and entry.label is None:
                raise SchemaViolation(
                    f"entry {entry.volume_id}: VOLUME granularity requires label"
                )
        ids = [entry.volume_id for entry in self.entries]
        if len(set(ids)) != len(ids):
            raise SchemaViolation("duplicate volume_id in entries")

    @property
    def site_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for entry in self.entries:
            seen.setdefault(entry.site_id, None)
        return tuple(seen)

    @property
    def n_bscans(self) -> int:
        return sum(len(entry.bscan_paths) for entry in self.entries)


def _expect_str(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"{where}.{key} must be a non-empty string")
    return value


def _parse_label(value, where: str) -> GroundTruthLabel:
    try:
        return GroundTruthLabel(value)
    except ValueError:
        raise SchemaViolation(
            f"{where} has unknown label {value!r}; expected one of "
            f"{[label.value for label in GroundTruthLabel]}"
        ) from None


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaViolation(f"{where} has unknown key(s): {', '.join(unknown)}")


def parse_manifest(path) -> DatasetManifest:
    """Load and validate a manifest document; checks every listed path exists."""
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"manifest not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaViolation(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation("manifest top level must be an object")

    _check_keys(doc, {"dataset_id", "scanner_id", "label_granularity", "entries"}, "manifest")
    dataset_id = _expect_str(doc, "dataset_id", "manifest")
    scanner_id = _expect_str(doc, "scanner_id", "manifest")
    raw_gran = doc.get("label_granularity")
    try:
        granularity = Granularity(raw_gran)
    except ValueError:
        raise SchemaViolation(
            f"manifest.label_granularity must be 'VOLUME' or 'BSCAN', got {raw_gran!r}"
        ) from None
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list) or not raw_entries:
        raise SchemaViolation("manifest.entries must be a non-empty array")

    base = p.parent
    entries = []
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]"
        if not isinstance(raw, dict):
            raise SchemaViolation(f"{where} must be an object")
        _check_keys(raw, {"volume_id", "site_id", "label", "labels", "bscan_paths"}, where)
        volume_id = _expect_str(raw, "volume_id", where)
        site_id = _expect_str(raw, "site_id", where)
        raw_paths = raw.get("bscan_paths")
        if (
            not isinstance(raw_paths, list)
            or not raw_paths
            or not all(isinstance(q, str) and q for q in raw_paths)
        ):
            raise SchemaViolation(f"{where}.bscan_paths must be a non-empty array of strings")

        label = labels = None
        if granularity is Granularity.VOLUME:
            if "labels" in raw:
                raise SchemaViolation(f"{where}.labels is invalid at VOLUME granularity")
            if "label" not in raw:
                raise SchemaViolation(f"{where}.label is required at VOLUME granularity")
            label = _parse_label(raw["label"], f"{where}.label")
        else:
            if "label" in raw:
                raise SchemaViolation(f"{where}.label is invalid at BSCAN granularity")
            raw_labels = raw.get("labels")
            if not isinstance(raw_labels, list):
                raise SchemaViolation(f"{where}.labels is required at BSCAN granularity")
            if len(raw_labels) != len(raw_paths):
                raise SchemaViolation(
                    f"{where}.labels has {len(raw_labels)} items for {len(raw_paths)} bscan_paths"
                )
            labels = tuple(
                _parse_label(v, f"{where}.labels[{j}]") for j, v in enumerate(raw_labels)
            )

        for rel in raw_paths:
            if not (base / rel).is_file():
                raise DanglingPath(f"{where}: listed B-scan file is absent: {base / rel}")
        entries.append(
            ManifestEntry(
                volume_id=volume_id,
                site_id=site_id,
                bscan_paths=tuple(raw_paths),
                label=label,
                labels=labels,
            )
        )
    return DatasetManifest(
        dataset_id=dataset_id, scanner_id=scanner_id, granularity=granularity, entries=tuple(entries)
    )


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Serialize a manifest; parse_manifest(write_manifest(m)) == m."""
    entries = []
    for entry in manifest.entries:
        obj: dict = {"volume_id": entry.volume_id, "site_id": entry.site_id}
        if manifest.granularity is Granularity.VOLUME:
            obj["label"] = entry.label.value
        else:
            obj["labels"] = [label.value for label in entry.labels]
        obj["bscan_paths"] = list(entry.bscan_paths)
        entries.append(obj)
    doc = {
        "dataset_id": manifest.dataset_id,
        "scanner_id": manifest.scanner_id,
        "label_granularity": manifest.granularity.value,
        "entries": entries,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _derived_volume_label(entry: ManifestEntry) -> GroundTruthLabel:
    # For BSCAN-granularity entries the volume is anomalous if any slice is.
    if all(label is GroundTruthLabel.NORMAL for label in entry.labels):
        return GroundTruthLabel.NORMAL
    return GroundTruthLabel.ANOMALOUS_OTHER


def load_volume(entry: ManifestEntry, base, scanner_id: str = "") -> OCTVolume:
    """Decode the entry's B-scans in listed order into an OCTVolume.

    All B-scans of one volume must share dimensions; different volumes may
    differ freely in both size and slice count. `scanner_id` comes from the
    manifest, which owns it.
    """
    base = Path(base)
    scans = []
    for i, rel in enumerate(entry.bscan_paths):
        full = base / rel
        if not full.is_file():
            raise DanglingPath(f"B-scan file is absent: {full}")
        try:
            with Image.open(full) as im:
                if im.mode != "L":
                    raise DecodeError(f"{full}: expected 8-bit grayscale, got mode {im.mode}")
                pixels = np.asarray(im, dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            raise DecodeError(f"{full}: cannot decode image ({exc})") from exc
        scans.append(BScan(pixels=pixels, index=i))
    shapes = {scan.pixels.shape for scan in scans}
    if len(shapes) > 1:
        raise HeterogeneousSize(
            f"volume {entry.volume_id}: B-scan sizes differ: {sorted(shapes)}"
        )
    label = entry.label if entry.label is not None else _derived_volume_label(entry)
    return OCTVolume(
        volume_id=entry.volume_id,
        bscans=tuple(scans),
        label=label,
        site_id=entry.site_id,
        scanner_id=scanner_id,
    )
