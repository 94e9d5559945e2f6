import dataclasses
import struct
import zlib

import numpy as np
import pytest

from oct_triage.domain import TaskId
from oct_triage.errors import ConfigError, CorruptFile, MissingFile, ShapeMismatch, VersionMismatch
from oct_triage.nn import (
    ModelConfig,
    TOY_BLOCKS,
    VGG16_BLOCKS,
    build_model,
    forward,
    forward_batch,
    layer_plan,
    load_weights,
    param_count,
    save_weights,
)
from oct_triage.nn.layers import sigmoid


TINY = ModelConfig(input_size=(8, 8), conv_blocks=((4, 1), (8, 1)), dense_units=8, seed=5)


def analytic_param_count(config):
    # independent arithmetic: sum(3*3*c_in*c_out + c_out) over convs + dense terms
    total = 0
    c_in = 1
    for channels, convs in config.conv_blocks:
        for _ in range(convs):
            total += 3 * 3 * c_in * channels + channels
            c_in = channels
    grid = (
        config.input_size[0] >> len(config.conv_blocks),
        config.input_size[1] >> len(config.conv_blocks),
    )
    flat = c_in * grid[0] * grid[1]
    total += flat * config.dense_units + config.dense_units
    total += config.dense_units * 1 + 1
    return total


def naive_forward(config, params, img):
    """Straight-line forward oracle: per-layer loops, no im2col."""
    offset = 0

    def take(shape):
        nonlocal offset
        size = int(np.prod(shape))
        out = params[offset:offset + size].astype(np.float64).reshape(shape)
        offset += size
        return out

    act = img.astype(np.float64)[None, :, :]  # (C, H, W)
    for channels, convs in config.conv_blocks:
        for _ in range(convs):
            w = take((channels, act.shape[0], 3, 3))
            b = take((channels,))
            c_in, h, wid = act.shape
            out = np.zeros((channels, h, wid))
            padded = np.pad(act, ((0, 0), (1, 1), (1, 1)))
            for o in range(channels):
                acc = np.full((h, wid), b[o])
                for c in range(c_in):
                    for ky in range(3):
                        for kx in range(3):
                            acc += w[o, c, ky, kx] * padded[c, ky:ky + h, kx:kx + wid]
                out[o] = acc
            act = np.maximum(out, 0.0)
        c, h, wid = act.shape
        act = act.reshape(c, h // 2, 2, wid // 2, 2).max(axis=(2, 4))
    flat = act.reshape(-1)
    w1 = take((flat.size, config.dense_units))
    b1 = take((config.dense_units,))
    hidden = np.maximum(flat @ w1 + b1, 0.0)
    w2 = take((config.dense_units, 1))
    b2 = take((1,))
    z = (hidden @ w2 + b2).item()
    return 1.0 / (1.0 + np.exp(-z))


class TestConfig:
    def test_defaults(self):
        config = ModelConfig()
        assert config.conv_blocks == TOY_BLOCKS
        assert config.input_size == (224, 224)

    def test_indivisible_input_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(input_size=(100, 100), conv_blocks=((8, 1), (16, 1), (32, 1)))

    def test_vgg16_preset_final_grid_is_7x7(self):
        config = ModelConfig(input_size=(224, 224), conv_blocks=VGG16_BLOCKS)
        assert config.final_grid == (7, 7)
        assert config.flat_dim == 7 * 7 * 512

    def test_param_count_matches_analytic_formula(self):
        for config in (
            TINY,
            ModelConfig(input_size=(224, 224)),
            ModelConfig(input_size=(64, 64), conv_blocks=((8, 2), (16, 2), (32, 2))),
        ):
            assert param_count(config) == analytic_param_count(config)

    def test_layer_plan_shape(self):
        plan = layer_plan(TINY)
        assert plan == [("conv", 1, 4), ("conv", 4, 8), ("dense", 8 * 2 * 2, 8), ("dense", 8, 1)]


class TestBuildAndForward:
    def test_same_seed_same_weights(self):
        a = build_model(TINY, TaskId.ANOMALY)
        b = build_model(TINY, TaskId.ANOMALY)
        assert np.array_equal(a.params, b.params)

    def test_different_seed_differs(self):
        a = build_model(TINY, TaskId.ANOMALY)
        b = build_model(dataclasses.replace(TINY, seed=6), TaskId.ANOMALY)
        assert not np.array_equal(a.params, b.params)

    def test_zero_weights_give_half(self):
        model = build_model(TINY, TaskId.ANOMALY)
        model.params[:] = 0.0
        assert forward(model, np.random.default_rng(0).random((8, 8))) == 0.5

    def test_matches_naive_oracle(self):
        model = build_model(TINY, TaskId.ANOMALY)
        rng = np.random.default_rng(10)
        for _ in range(5):
            img = rng.random((8, 8))
            assert abs(forward(model, img) - naive_forward(TINY, model.params, img)) < 1e-6

    def test_repeat_calls_bitwise_identical(self):
        model = build_model(TINY, TaskId.ANOMALY)
        img = np.random.default_rng(1).random((8, 8))
        first = forward(model, img)
        assert all(forward(model, img) == first for _ in range(100))

    def test_output_strictly_inside_unit_interval(self):
        model = build_model(TINY, TaskId.ANOMALY)
        rng = np.random.default_rng(3)
        for scale in (1.0, 100.0, 10_000.0):
            model.params[:] = (rng.standard_normal(model.params.size) * scale).astype(
                np.float32
            )
            p = forward(model, rng.random((8, 8)))
            assert 0.0 < p < 1.0

    def test_shape_mismatch(self):
        model = build_model(TINY, TaskId.ANOMALY)
        with pytest.raises(ShapeMismatch):
            forward(model, np.zeros((8, 10)))
        with pytest.raises(ShapeMismatch):
            forward_batch(model, np.zeros((2, 10, 8)))

    def test_sigmoid_matches_closed_form(self):
        z = np.linspace(-20, 20, 41)
        assert np.allclose(sigmoid(z), 1.0 / (1.0 + np.exp(-z)), atol=1e-15)


class TestSerialization:
    def test_round_trip_forward_bit_exact(self, tmp_path):
        model = build_model(TINY, TaskId.DME)
        path = tmp_path / "model.poct"
        save_weights(model, path)
        loaded = load_weights(path)
        assert loaded.task is TaskId.DME
        assert loaded.config == TINY
        rng = np.random.default_rng(8)
        for _ in range(10):
            img = rng.random((8, 8))
            assert forward(loaded, img) == forward(model, img)

    def test_truncated_file(self, tmp_path):
        model = build_model(TINY, TaskId.ANOMALY)
        path = tmp_path / "model.poct"
        save_weights(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CorruptFile):
            load_weights(path)

    def test_version_99_rejected(self, tmp_path):
        model = build_model(TINY, TaskId.ANOMALY)
        path = tmp_path / "model.poct"
        save_weights(model, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        blob[-4:] = struct.pack("<I", zlib.crc32(bytes(blob[:-4])))  # keep checksum valid
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch):
            load_weights(path)

    def test_flipped_payload_byte_fails_checksum(self, tmp_path):
        model = build_model(TINY, TaskId.ANOMALY)
        path = tmp_path / "model.poct"
        save_weights(model, path)
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptFile):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.poct"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(CorruptFile):
            load_weights(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_weights(tmp_path / "absent.poct")
