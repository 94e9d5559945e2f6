"""Mini-batch SGD on binary cross-entropy with early stopping.

Each item receives a fresh augmentation draw every epoch, keyed on
(seed, epoch, item_index), so the run is a pure function of the data, the
seeds and the config. Returned weights are those of the epoch with the
lowest validation loss (ties go to the earliest epoch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ConfigError, DegenerateSplit, DivergedLoss
from ..preprocess import AugmentParams, apply_augmentation, sample_augmentation
from .network import TrainedModel, batch_loss, loss_and_grad

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int
    patience: int
    learning_rate: float = 0.05
    batch_size: int = 16
    min_delta: float = 0.0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ConfigError("patience must satisfy 0 <= patience < max_epochs")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be >= 0")


class EpochStats(NamedTuple):
    train_loss: float
    val_loss: float


class LabeledImage(NamedTuple):
    image: np.ndarray   # canonical (H, W) float in [0, 1]
    label: bool


class EarlyStopping:
    """Stop once validation loss has not improved by more than min_delta
    for `patience` consecutive epochs.

    `best_epoch` is the argmin of validation loss over executed epochs,
    earliest on ties; the improvement streak is gated by min_delta against
    the best improved-to value, so a sub-min_delta dip still counts toward
    stopping but is remembered as the argmin.
    """

    def __init__(self, patience: int, min_delta: float = 0.0) -> None:
        self.patience = patience
        self.min_delta = min_delta
        self.losses: list[float] = []
        self.best_epoch: Optional[int] = None
        self._argmin = math.inf
        self._gated_best = math.inf
        self._wait = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        epoch = len(self.losses)
        self.losses.append(val_loss)
        if val_loss < self._argmin:
            self._argmin = val_loss
            self.best_epoch = epoch
        if val_loss < self._gated_best - self.min_delta:
            self._gated_best = val_loss
            self._wait = 0
        else:
            self._wait += 1
        return self.patience > 0 and self._wait >= self.patience


def _stack_items(items: Sequence[LabeledImage]):
    x = np.stack([item.image for item in items])
    y = np.array([item.label for item in items], dtype=bool)
    return x, y


def _check_split(name: str, items: Sequence[LabeledImage]) -> None:
    if not items:
        raise DegenerateSplit(f"{name} split is empty")
    labels = {bool(item.label) for item in items}
    if len(labels) < 2:
        raise DegenerateSplit(f"{name} split contains a single class")


def train(
    model: TrainedModel,
    train_items: Sequence[LabeledImage],
    val_items: Sequence[LabeledImage],
    tc: TrainConfig,
    augment: AugmentParams = AugmentParams(),
    augment_seed: Optional[int] = None,
) -> TrainedModel:
    """Train a copy of `model`; the input model is left untouched.

    augment_seed defaults to the model config seed. Batch order is shuffled
    per epoch from the same seed, so two runs with identical inputs produce
    identical histories and weights.
    """
    _check_split("train", train_items)
    _check_split("val", val_items)
    seed = (model.config.seed if augment_seed is None else augment_seed) & _MASK64
    config = model.config

    x_val, y_val = _stack_items(val_items)
    x_val = x_val.astype(np.float32)
    y_train = np.array([item.label for item in train_items], dtype=bool)
    n = len(train_items)

    params = model.params.copy()
    best_params = params.copy()
    stopper = EarlyStopping(tc.patience, tc.min_delta)
    history: list[EpochStats] = []

    for epoch in range(tc.max_epochs):
        order = np.random.default_rng((seed, epoch)).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            x_batch = np.stack(
                [
                    apply_augmentation(
                        train_items[i].image,
                        sample_augmentation(augment, seed, epoch, int(i)),
                    )
                    for i in idx
                ]
            ).astype(np.float32)
            loss, grad = loss_and_grad(config, params, x_batch, y_train[idx], dtype=np.float32)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            loss_sum += loss * idx.size
            params = params - np.float32(tc.learning_rate) * grad

        train_loss = loss_sum / n
        val_loss = batch_loss(config, params, x_val, y_val, dtype=np.float32)
        if not math.isfinite(val_loss):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochStats(train_loss=train_loss, val_loss=val_loss))

        stop = stopper.update(val_loss)
        if stopper.best_epoch == epoch:
            best_params = params.copy()
        if stop:
            break

    return TrainedModel(config=config, task=model.task, params=best_params, history=history)
