"""Canonicalize B-scans and apply seeded stochastic augmentation.

Intensities are mapped by the fixed affine map /255 rather than per-image
min-max, so contrast differences survive normalization and stay visible to
the quality model. All geometry uses bilinear sampling; augmentation warps
fill out-of-frame samples with 0 (vitreous-dark).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .domain import BScan

#: Canonical target size used when none is configured.
DEFAULT_TARGET = (224, 224)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class AugmentParams:
    """Half-ranges of the uniform augmentation draws; identity when all 0."""

    rotation: float = 10.0      # degrees
    translation: float = 0.05   # fraction of width/height per axis
    zoom: float = 0.1           # scale drawn from [1 - zoom, 1 + zoom]
    brightness: float = 0.1     # additive shift, post-shift clamped to [0, 1]

    def __post_init__(self) -> None:
        for name in ("rotation", "translation", "zoom", "brightness"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls(0.0, 0.0, 0.0, 0.0)


class ConcreteAugmentation(NamedTuple):
    """One sampled transform: rotate, then zoom (both about center), then shift."""

    rotation: float   # degrees
    shift_x: float    # fraction of width
    shift_y: float    # fraction of height
    zoom: float
    brightness: float

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation == 0.0
            and self.shift_x == 0.0
            and self.shift_y == 0.0
            and self.zoom == 1.0
            and self.brightness == 0.0
        )

    @property
    def is_identity_geometry(self) -> bool:
        return self.rotation == 0.0 and self.shift_x == 0.0 and self.shift_y == 0.0 and self.zoom == 1.0


IDENTITY_AUGMENTATION = ConcreteAugmentation(0.0, 0.0, 0.0, 1.0, 0.0)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with edge clamping; exact copy when sizes match."""
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = (1.0 - wx) * img[np.ix_(y0, x0)] + wx * img[np.ix_(y0, x1)]
    bot = (1.0 - wx) * img[np.ix_(y1, x0)] + wx * img[np.ix_(y1, x1)]
    return (1.0 - wy) * top + wy * bot


def normalize(scan: BScan, target: tuple[int, int] = DEFAULT_TARGET) -> np.ndarray:
    """Resample to the canonical size and map intensities from [0,255] to [0,1].

    When the input already has the target size the resample is an exact
    identity, so the output equals pixels / 255 bit-for-bit.
    """
    img = scan.pixels.astype(np.float64) / 255.0
    out = bilinear_resize(img, target[0], target[1])
    if out is not img and img.shape != tuple(target):
        np.clip(out, 0.0, 1.0, out=out)
    return out


def sample_augmentation(
    params: AugmentParams, rng_seed: int, epoch: int, item_index: int
) -> ConcreteAugmentation:
    """Draw one transform uniformly within the configured ranges.

    Pure function of (seed, epoch, item_index); distinct epochs and items
    yield independent streams, so no image repeats across training epochs.
    """
    rng = np.random.default_rng((rng_seed & _MASK64, epoch, item_index))
    u = rng.random(5)
    return ConcreteAugmentation(
        rotation=(2.0 * u[0] - 1.0) * params.rotation,
        shift_x=(2.0 * u[1] - 1.0) * params.translation,
        shift_y=(2.0 * u[2] - 1.0) * params.translation,
        zoom=1.0 + (2.0 * u[3] - 1.0) * params.zoom,
        brightness=(2.0 * u[4] - 1.0) * params.brightness,
    )


def apply_augmentation(img: np.ndarray, aug: ConcreteAugmentation) -> np.ndarray:
    """Warp about the image center, add brightness, clamp to [0, 1].

    Identity parameters are a bit-exact no-op. Out-of-frame samples are 0.
    """
    if aug.is_identity:
        return img.copy()
    if aug.is_identity_geometry:
        return np.clip(img + aug.brightness, 0.0, 1.0)

    h, w = img.shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    theta = math.radians(aug.rotation)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    tx = aug.shift_x * w
    ty = aug.shift_y * h

    # Inverse map of: p_out = zoom * R(theta) (p - c) + c + t
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    u = (xx - cx - tx) / aug.zoom
    v = (yy - cy - ty) / aug.zoom
    xs = cos_t * u + sin_t * v + cx
    ys = -sin_t * u + cos_t * v + cy

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    wx = xs - x0
    wy = ys - y0

    out = np.zeros_like(img)
    for dy, dx, weight in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yn = y0 + dy
        xn = x0 + dx
        valid = (yn >= 0) & (yn < h) & (xn >= 0) & (xn < w)
        vals = img[np.clip(yn, 0, h - 1), np.clip(xn, 0, w - 1)]
        out += weight * np.where(valid, vals, 0.0)

    if aug.brightness != 0.0:
        out += aug.brightness
    np.clip(out, 0.0, 1.0, out=out)
    return out
