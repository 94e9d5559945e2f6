"""Versioned binary weight container (.poct).

Layout, all integers little-endian:

    magic           4 bytes  b"POCT"
    version         u32      currently 1
    task id         u8       anomaly=1 dry_amd=2 wet_amd=3 dme=4 quality=5
    input height    u32
    input width     u32
    n_blocks        u32
    per block       u32 channels, u32 convs_per_block
    dense_units     u32
    seed            u64
    n_params        u32
    weights         n_params * f32, in layer order (conv W then bias per
                    conv, block by block; dense1 W, b; dense2 W, b)
    crc32           u32      of every preceding byte

Training history is not stored; a loaded model starts with an empty history.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..domain import TaskId
from ..errors import ConfigError, CorruptFile, MissingFile, VersionMismatch
from .network import ModelConfig, TrainedModel, param_count

MAGIC = b"POCT"
VERSION = 1

TASK_TO_BYTE = {
    TaskId.ANOMALY: 1,
    TaskId.DRY_AMD: 2,
    TaskId.WET_AMD: 3,
    TaskId.DME: 4,
    TaskId.QUALITY: 5,
}
BYTE_TO_TASK = {v: k for k, v in TASK_TO_BYTE.items()}


def save_weights(model: TrainedModel, path) -> None:
    """Write the model to `path`; load_weights reproduces forward bit-exactly."""
    if model.task not in TASK_TO_BYTE:
        raise ConfigError(f"task {model.task} is not serializable")
    cfg = model.config
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<B", TASK_TO_BYTE[model.task]),
        struct.pack("<II", cfg.input_size[0], cfg.input_size[1]),
        struct.pack("<I", len(cfg.conv_blocks)),
    ]
    for channels, convs in cfg.conv_blocks:
        parts.append(struct.pack("<II", channels, convs))
    parts.append(struct.pack("<I", cfg.dense_units))
    parts.append(struct.pack("<Q", cfg.seed & ((1 << 64) - 1)))
    parts.append(struct.pack("<I", model.params.size))
    parts.append(model.params.astype("<f4").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_weights(path) -> TrainedModel:
    """Read a .poct file; raises CorruptFile or VersionMismatch on bad input."""
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"weight file not found: {p}")
    blob = p.read_bytes()

    def take(reader_offset: int, fmt: str):
        size = struct.calcsize(fmt)
        if reader_offset + size > len(blob) - 4:
            raise CorruptFile(f"truncated weight file: {p}")
        return struct.unpack_from(fmt, blob, reader_offset), reader_offset + size

    if len(blob) < 13:
        raise CorruptFile(f"truncated weight file: {p}")
    if blob[:4] != MAGIC:
        raise CorruptFile(f"bad magic bytes in {p}")
    (version,), off = take(4, "<I")
    if version != VERSION:
        raise VersionMismatch(f"{p}: format version {version}, expected {VERSION}")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise CorruptFile(f"checksum mismatch in {p}")

    (task_byte,), off = take(off, "<B")
    if task_byte not in BYTE_TO_TASK:
        raise CorruptFile(f"{p}: unknown task id {task_byte}")
    (h, w), off = take(off, "<II")
    (n_blocks,), off = take(off, "<I")
    blocks = []
    for _ in range(n_blocks):
        (channels, convs), off = take(off, "<II")
        blocks.append((channels, convs))
    (dense_units,), off = take(off, "<I")
    (seed,), off = take(off, "<Q")
    (n_params,), off = take(off, "<I")

    try:
        config = ModelConfig(
            input_size=(h, w), conv_blocks=tuple(blocks), dense_units=dense_units, seed=seed
        )
    except ConfigError as exc:
        raise CorruptFile(f"{p}: invalid config block ({exc})") from exc
    if n_params != param_count(config):
        raise CorruptFile(
            f"{p}: config implies {param_count(config)} parameters, header says {n_params}"
        )
    end = off + 4 * n_params
    if end != len(blob) - 4:
        raise CorruptFile(f"{p}: weight payload has the wrong length")
    params = np.frombuffer(blob[off:end], dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(params)):
        raise CorruptFile(f"{p}: non-finite weights")
    return TrainedModel(config=config, task=BYTE_TO_TASK[task_byte], params=params)
