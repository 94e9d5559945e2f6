"""VGG-style binary classifier: configuration, parameter layout, forward pass.

A model is a flat float32 parameter vector plus a config describing the
stack: per block, ``convs_per_block`` 3x3/same/ReLU convolutions followed by
a 2x2 max-pool; then flatten, dense+ReLU, dense(1)+sigmoid. Inference and
gradient checks run in float64, training in float32; the float32 store is
what gets serialized, so a save/load round trip reproduces forward outputs
bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from ..domain import TaskId
from ..errors import ConfigError, ShapeMismatch
from . import layers

_MASK64 = (1 << 64) - 1

#: Desk-scale default block stack.
TOY_BLOCKS = ((8, 2), (16, 2), (32, 2))
#: Full-scale stack of the classic 16-layer configuration.
VGG16_BLOCKS = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))

PRESET_BLOCKS = {"toy": TOY_BLOCKS, "vgg16": VGG16_BLOCKS}

#: Probabilities are clamped into this open interval so forward output is
#: strictly inside (0, 1) even for extreme logits.
_PROB_EPS = 1e-15


@dataclass(frozen=True)
class ModelConfig:
    input_size: tuple[int, int] = (224, 224)
    conv_blocks: tuple[tuple[int, int], ...] = TOY_BLOCKS
    dense_units: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(
            self, "conv_blocks", tuple((int(c), int(k)) for c, k in self.conv_blocks)
        )
        if len(self.conv_blocks) < 1:
            raise ConfigError("need at least one conv block")
        for channels, convs in self.conv_blocks:
            if channels < 1 or convs < 1:
                raise ConfigError("block channels and convs_per_block must be >= 1")
        if self.dense_units < 1:
            raise ConfigError("dense_units must be >= 1")
        h, w = self.input_size
        div = 1 << len(self.conv_blocks)
        if h % div or w % div:
            raise ConfigError(
                f"input size {h}x{w} not divisible by 2^{len(self.conv_blocks)}"
            )

    @property
    def final_grid(self) -> tuple[int, int]:
        div = 1 << len(self.conv_blocks)
        return (self.input_size[0] // div, self.input_size[1] // div)

    @property
    def flat_dim(self) -> int:
        gh, gw = self.final_grid
        return self.conv_blocks[-1][0] * gh * gw


def layer_plan(config: ModelConfig) -> list[tuple]:
    """Parameterized layers in serialization order.

    Entries are ("conv", c_in, c_out) or ("dense", d_in, d_out); pools and
    activations carry no parameters and are implied by the config.
    """
    plan: list[tuple] = []
    c_in = 1
    for channels, convs in config.conv_blocks:
        for _ in range(convs):
            plan.append(("conv", c_in, channels))
            c_in = channels
    plan.append(("dense", config.flat_dim, config.dense_units))
    plan.append(("dense", config.dense_units, 1))
    return plan


def param_count(config: ModelConfig) -> int:
    total = 0
    for kind, d_in, d_out in layer_plan(config):
        if kind == "conv":
            total += 9 * d_in * d_out + d_out
        else:
            total += d_in * d_out + d_out
    return total


def _param_slices(config: ModelConfig) -> list[tuple[str, tuple, slice, slice]]:
    """(kind, weight_shape, weight_slice, bias_slice) per layer, in order."""
    out = []
    offset = 0
    for kind, d_in, d_out in layer_plan(config):
        if kind == "conv":
            w_shape = (d_out, d_in, 3, 3)
            w_size = 9 * d_in * d_out
        else:
            w_shape = (d_in, d_out)
            w_size = d_in * d_out
        w_slice = slice(offset, offset + w_size)
        b_slice = slice(offset + w_size, offset + w_size + d_out)
        out.append((kind, w_shape, w_slice, b_slice))
        offset = b_slice.stop
    return out


@dataclass
class TrainedModel:
    """Config plus flat float32 parameter store; history filled by training."""

    config: ModelConfig
    task: TaskId
    params: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self) -> None:
        expected = param_count(self.config)
        if self.params.dtype != np.float32 or self.params.shape != (expected,):
            raise ConfigError(
                f"parameter store must be float32 of length {expected}, "
                f"got {self.params.dtype} {self.params.shape}"
            )
        if not np.all(np.isfinite(self.params)):
            raise ConfigError("parameters must be finite")


def build_model(config: ModelConfig, task: TaskId) -> TrainedModel:
    """Initialize weights with fan-in-scaled uniform noise, biases at zero.

    Deterministic for a fixed config seed: the same config built twice yields
    identical parameters.
    """
    rng = np.random.default_rng(config.seed & _MASK64)
    params = np.empty(param_count(config), dtype=np.float32)
    for kind, w_shape, w_slice, b_slice in _param_slices(config):
        fan_in = 9 * w_shape[1] if kind == "conv" else w_shape[0]
        # He-style bound keeps activation variance stable through ReLU stacks
        bound = np.sqrt(6.0 / fan_in)
        params[w_slice] = rng.uniform(-bound, bound, w_slice.stop - w_slice.start).astype(
            np.float32
        )
        params[b_slice] = 0.0
    return TrainedModel(config=config, task=task, params=params)


def _views(config: ModelConfig, flat: np.ndarray) -> list[tuple[str, np.ndarray, np.ndarray]]:
    return [
        (kind, flat[w_slice].reshape(w_shape), flat[b_slice])
        for kind, w_shape, w_slice, b_slice in _param_slices(config)
    ]


def forward_logits(
    config: ModelConfig,
    flat_params: np.ndarray,
    x: np.ndarray,
    keep_caches: bool = False,
    dtype=np.float64,
):
    """Run the stack on a batch x of shape (N, H, W); returns (logits, caches).

    Math runs in `dtype`: float64 for inference and gradient checks,
    float32 for the training fast path.
    """
    n = x.shape[0]
    if x.shape[1:] != config.input_size:
        raise ShapeMismatch(
            f"input {x.shape[1:]} does not match model input size {config.input_size}"
        )
    views = _views(config, np.ascontiguousarray(flat_params, dtype=dtype))
    caches = []
    act = np.ascontiguousarray(x, dtype=dtype).reshape(n, 1, *config.input_size)

    i = 0
    for _channels, convs in config.conv_blocks:
        for _ in range(convs):
            _, w, b = views[i]
            i += 1
            act, conv_cache = layers.conv3x3_forward(act, w, b)
            act, relu_mask = layers.relu_forward(act)
            if keep_caches:
                caches.append(("conv", conv_cache, relu_mask))
        act, pool_cache = layers.maxpool2_forward(act)
        if keep_caches:
            caches.append(("pool", pool_cache))

    act = act.reshape(n, -1)
    _, w, b = views[i]
    act, d1_cache = layers.dense_forward(act, w, b)
    act, relu_mask = layers.relu_forward(act)
    if keep_caches:
        caches.append(("dense_relu", d1_cache, relu_mask))
    _, w, b = views[i + 1]
    z, d2_cache = layers.dense_forward(act, w, b)
    if keep_caches:
        caches.append(("dense_out", d2_cache))
    return z[:, 0], caches


def forward_batch(model: TrainedModel, imgs: np.ndarray) -> np.ndarray:
    """Probabilities for a batch of canonical images (N, H, W)."""
    z, _ = forward_logits(model.config, model.params, imgs)
    return np.clip(layers.sigmoid(z), _PROB_EPS, 1.0 - _PROB_EPS)


def forward(model: TrainedModel, img: np.ndarray) -> float:
    """Probability for one canonical image (H, W); strictly inside (0, 1)."""
    if img.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D image, got shape {img.shape}")
    return float(forward_batch(model, img[None])[0])


def loss_and_grad(
    config: ModelConfig,
    flat_params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    dtype=np.float64,
):
    """Mean BCE over the batch and its gradient w.r.t. the flat parameters.

    A pure function of flat_params in the requested dtype; this single
    implementation backs both training (float32) and the float64
    finite-difference checks in the test suite.
    """
    n = x.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        z, caches = forward_logits(config, flat_params, x, keep_caches=True, dtype=dtype)
        losses, dz = layers.bce_from_logits(z, y.astype(dtype))
    loss = float(losses.mean())

    grad = np.zeros(param_count(config), dtype=dtype)
    grad_views = _views(config, grad)
    dact = (dz / n)[:, None]

    li = len(grad_views) - 1
    _tag, d2_cache = caches[-1]
    dact, dw, db = layers.dense_backward(dact, d2_cache)
    grad_views[li][1][...] = dw
    grad_views[li][2][...] = db
    li -= 1

    _tag, d1_cache, relu_mask = caches[-2]
    dact = layers.relu_backward(dact, relu_mask)
    dact, dw, db = layers.dense_backward(dact, d1_cache)
    grad_views[li][1][...] = dw
    grad_views[li][2][...] = db
    li -= 1

    gh, gw = config.final_grid
    dact = dact.reshape(n, config.conv_blocks[-1][0], gh, gw)
    for entry in reversed(caches[:-2]):
        if entry[0] == "pool":
            dact = layers.maxpool2_backward(dact, entry[1])
        else:
            _tag, conv_cache, relu_mask = entry
            dact = layers.relu_backward(dact, relu_mask)
            dact, dw, db = layers.conv3x3_backward(dact, conv_cache)
            grad_views[li][1][...] = dw
            grad_views[li][2][...] = db
            li -= 1
    return loss, grad


def batch_loss(
    config: ModelConfig,
    flat_params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    dtype=np.float64,
) -> float:
    """Mean BCE of a batch without gradients."""
    with np.errstate(over="ignore", invalid="ignore"):
        z, _ = forward_logits(config, flat_params, x, dtype=dtype)
        losses, _ = layers.bce_from_logits(z, y.astype(dtype))
    return float(losses.mean())
