"""Exception hierarchy shared by all modules.

``UsageError`` maps to CLI exit code 1, every other ``OctTriageError``
to exit code 2, and anything unexpected to exit code 3.
"""


class OctTriageError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(OctTriageError):
    """Bad command line invocation."""


# Manifest / image ingest

class MissingFile(OctTriageError):
    """A required file does not exist."""


class SchemaViolation(OctTriageError):
    """A manifest document breaks the schema; message names the field."""


class DanglingPath(OctTriageError):
    """A manifest lists a B-scan file that is absent on disk."""


class DecodeError(OctTriageError):
    """An image file could not be decoded as 8-bit grayscale."""


class HeterogeneousSize(OctTriageError):
    """B-scans within one volume differ in dimensions."""


class IoError(OctTriageError):
    """Failed to write generated output."""


# Model construction / training

class ConfigError(OctTriageError):
    """Invalid model configuration."""


class ShapeMismatch(OctTriageError):
    """Input dimensions do not match the model input size."""


class DegenerateSplit(OctTriageError):
    """A training or validation split contains a single class."""


class DivergedLoss(OctTriageError):
    """Training produced a non-finite loss."""


# Weight files

class CorruptFile(OctTriageError):
    """Weight file failed magic, length, checksum or layout validation."""


class VersionMismatch(OctTriageError):
    """Weight file carries an unsupported format version."""


# Metrics / evaluation

class SingleClass(OctTriageError):
    """ROC analysis needs at least one positive and one negative."""


class EmptyDataset(OctTriageError):
    """An operation that needs at least one item received none."""


class MissingPrediction(OctTriageError):
    """Predictions and manifest entries do not match one-to-one."""


class GranularityMismatch(OctTriageError):
    """Predictions lack the per-B-scan detail the manifest granularity needs."""
