"""Synthetic OCT-like phantom cohorts with known ground truth.

Each B-scan is a layered 5-band retina (vitreous, bright inner limiting
band, inner retina, outer nuclear layer, bright outer band over a fading
choroid) with parametric lesions per class:

* DRY_AMD   - Gaussian drusen bumps lifting the bright outer band, with
              medium-bright deposit material underneath.
* WET_AMD   - drusen plus dark fluid lobes punched in below the band.
* DME       - dark intraretinal lobes, punctate bright foci, and a
              thickened retina.

Site profiles vary noise, contrast and effective resolution to mimic
independent acquisition sites. Generation is single-threaded and runs off
one seeded generator, so a fixed (config, seed) reproduces the output tree
byte for byte. A sidecar ``truth.json`` records per-B-scan gradability and
lesion tags; a configured fraction of B-scans is degraded (contrast crush
plus heavy noise) and flagged ungradable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .domain import GroundTruthLabel
from .errors import IoError
from .manifest import DatasetManifest, Granularity, ManifestEntry, write_manifest
from .preprocess import bilinear_resize

_MASK64 = (1 << 64) - 1

GENERATED_CLASSES = (
    GroundTruthLabel.NORMAL,
    GroundTruthLabel.DRY_AMD,
    GroundTruthLabel.WET_AMD,
    GroundTruthLabel.DME,
)


class SiteProfile(enum.Enum):
    CLEAN = "CLEAN"
    NOISY = "NOISY"
    LOWRES = "LOWRES"


# noise sigma (uint8 units), contrast factor about 128, halve-resolution flag
_PROFILE_PARAMS = {
    SiteProfile.CLEAN: (5.0, 1.0, False),
    SiteProfile.NOISY: (13.0, 0.78, False),
    SiteProfile.LOWRES: (7.0, 0.92, True),
}


@dataclass(frozen=True)
class PhantomConfig:
    n_volumes_per_class: int
    bscans_per_volume: int
    image_height: int = 64
    image_width: int = 64
    site_profile: SiteProfile = SiteProfile.CLEAN
    lesion_intensity_scale: float = 1.0
    ungradable_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_volumes_per_class < 1 or self.bscans_per_volume < 1:
            raise ValueError("counts must be >= 1")
        if self.image_height < 8 or self.image_width < 8:
            raise ValueError("image size below the 8x8 minimum")
        if not 0.0 <= self.lesion_intensity_scale <= 1.0:
            raise ValueError("lesion_intensity_scale must be in [0, 1]")
        if not 0.0 <= self.ungradable_fraction <= 1.0:
            raise ValueError("ungradable_fraction must be in [0, 1]")


def _volume_anatomy(rng: np.random.Generator, label: GroundTruthLabel) -> dict:
    anatomy = {
        "surf0": rng.uniform(0.18, 0.28),
        "sag": rng.uniform(0.02, 0.12),
        "tilt": rng.uniform(-0.06, 0.06),
        "thick": rng.uniform(0.30, 0.38),
        "thicken": 1.0,
    }
    if label is GroundTruthLabel.DME:
        anatomy["thicken"] = rng.uniform(1.28, 1.42)
    return anatomy


def _ellipse_mask(h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy = (np.arange(h)[:, None] - cy) / max(ry, 1e-6)
    xx = (np.arange(w)[None, :] - cx) / max(rx, 1e-6)
    return yy * yy + xx * xx <= 1.0


def _render_bscan(
    rng: np.random.Generator,
    h: int,
    w: int,
    label: GroundTruthLabel,
    anatomy: dict,
    lesion_scale: float,
) -> tuple[np.ndarray, list[str]]:
    x = np.arange(w, dtype=np.float64)
    xf = x / max(w - 1, 1)
    surf = h * (anatomy["surf0"] + rng.uniform(-0.02, 0.02)) + h * anatomy["sag"] * (
        xf - 0.5 - anatomy["tilt"]
    ) ** 2
    thick = h * anatomy["thick"] * anatomy["thicken"] * (1.0 + rng.uniform(-0.02, 0.02))
    ilm_th = max(1.5, 0.035 * h)
    band_th = max(2.0, 0.06 * h)
    inner_end = surf + ilm_th + 0.42 * (thick - ilm_th - band_th)
    band_top_base = surf + thick

    lesions: list[str] = []
    bump = np.zeros(w)
    if label in (GroundTruthLabel.DRY_AMD, GroundTruthLabel.WET_AMD):
        for _ in range(int(rng.integers(2, 6))):
            mu = rng.uniform(0.12, 0.88) * w
            sigma = rng.uniform(0.025, 0.06) * w
            amp = rng.uniform(0.07, 0.14) * h * lesion_scale
            bump += amp * np.exp(-0.5 * ((x - mu) / sigma) ** 2)
        bump = np.minimum(bump, 0.55 * thick)
        if bump.max() > 0:
            lesions.append("drusen")
    band_top = band_top_base - bump
    band_bottom_base = band_top_base + band_th

    rows = np.arange(h, dtype=np.float64)[:, None]
    img = np.full((h, w), 12.0)
    choroid = 82.0 - (rows - band_bottom_base[None, :]) * (62.0 / (0.30 * h))
    img = np.where(rows >= band_bottom_base[None, :], np.clip(choroid, 20.0, 82.0), img)
    img = np.where((rows >= surf) & (rows < surf + ilm_th), 172.0, img)
    img = np.where((rows >= surf + ilm_th) & (rows < inner_end), 106.0, img)
    img = np.where((rows >= inner_end) & (rows < band_top), 52.0, img)
    # sub-band deposit material fills the space the lifted band vacated
    img = np.where((rows >= band_top + band_th) & (rows < band_bottom_base), 135.0, img)
    img = np.where((rows >= band_top) & (rows < band_top + band_th), 206.0, img)

    if label is GroundTruthLabel.WET_AMD:
        for _ in range(int(rng.integers(1, 4))):
            cx = rng.uniform(0.15, 0.85) * w
            rx = rng.uniform(0.05, 0.12) * w
            ry = rng.uniform(0.05, 0.10) * h * max(lesion_scale, 0.2)
            cy = float(np.interp(cx, x, band_top)) + band_th + 0.6 * ry
            img[_ellipse_mask(h, w, cy, cx, ry, rx)] = 18.0
        lesions.append("subretinal_fluid")

    if label is GroundTruthLabel.DME:
        for _ in range(int(rng.integers(1, 4))):
            cx = rng.uniform(0.15, 0.85) * w
            rx = rng.uniform(0.05, 0.11) * w
            ry = rng.uniform(0.05, 0.10) * h * max(lesion_scale, 0.2)
            top = float(np.interp(cx, x, surf)) + ilm_th
            bottom = float(np.interp(cx, x, band_top))
            cy = top + rng.uniform(0.30, 0.75) * (bottom - top)
            img[_ellipse_mask(h, w, cy, cx, ry, rx)] = 24.0
        lesions.append("intraretinal_fluid")
        dot = max(1, round(0.02 * h))
        for _ in range(int(rng.integers(4, 9))):
            cx = int(rng.uniform(0.10, 0.90) * w)
            top = surf[min(cx, w - 1)] + ilm_th
            bottom = float(np.interp(cx, x, band_top))
            cy = int(top + rng.uniform(0.1, 0.9) * (bottom - top))
            img[max(0, cy - dot):cy + dot, max(0, cx - dot):cx + dot] = 238.0
        lesions.append("hyperreflective_foci")
        lesions.append("retinal_thickening")

    return img, lesions


def _apply_profile(img: np.ndarray, profile: SiteProfile, rng: np.random.Generator) -> np.ndarray:
    sigma, contrast, lowres = _PROFILE_PARAMS[profile]
    h, w = img.shape
    out = img
    if lowres:
        out = bilinear_resize(out, max(8, h // 2), max(8, w // 2))
        out = bilinear_resize(out, h, w)
    if contrast != 1.0:
        out = 128.0 + (out - 128.0) * contrast
    return out + rng.standard_normal(img.shape) * sigma


def _degrade(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean = img.mean()
    return mean + (img - mean) * 0.25 + rng.standard_normal(img.shape) * 30.0


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_phantom_dataset(config: PhantomConfig, out_dir) -> DatasetManifest:
    """Write a phantom cohort (images, manifest.json, truth.json) to out_dir.

    Deterministic: the same (config, seed) yields a byte-identical tree.
    Every pathological volume carries at least one lesion-bearing B-scan
    (in this generator, all of its B-scans do).
    """
    out = Path(out_dir)
    profile = config.site_profile
    rng = np.random.default_rng(config.seed & _MASK64)

    n_total = len(GENERATED_CLASSES) * config.n_volumes_per_class * config.bscans_per_volume
    n_degraded = int(np.floor(config.ungradable_fraction * n_total + 0.5))
    degraded_slots = set(rng.permutation(n_total)[:n_degraded].tolist())

    dataset_id = f"phantom-{profile.value.lower()}-s{config.seed}"
    site_id = f"site-{profile.value.lower()}"
    scanner_id = f"phantom-{profile.value.lower()}"

    entries = []
    truth: dict[str, dict] = {}
    slot = 0
    try:
        out.mkdir(parents=True, exist_ok=True)
        for label in GENERATED_CLASSES:
            for v in range(config.n_volumes_per_class):
                volume_id = f"{label.value.lower()}_{v:03d}"
                (out / volume_id).mkdir(exist_ok=True)
                anatomy = _volume_anatomy(rng, label)
                paths = []
                for k in range(config.bscans_per_volume):
                    img, lesions = _render_bscan(
                        rng,
                        config.image_height,
                        config.image_width,
                        label,
                        anatomy,
                        config.lesion_intensity_scale,
                    )
                    img = _apply_profile(img, profile, rng)
                    gradable = slot not in degraded_slots
                    if not gradable:
                        img = _degrade(img, rng)
                    slot += 1
                    rel = f"{volume_id}/bscan_{k:03d}.png"
                    Image.fromarray(_quantize(img), mode="L").save(out / rel, format="PNG")
                    truth[rel] = {"gradable": gradable, "lesions": lesions}
                    paths.append(rel)
                entries.append(
                    ManifestEntry(
                        volume_id=volume_id,
                        site_id=site_id,
                        bscan_paths=tuple(paths),
                        label=label,
                    )
                )
        manifest = DatasetManifest(
            dataset_id=dataset_id,
            scanner_id=scanner_id,
            granularity=Granularity.VOLUME,
            entries=tuple(entries),
        )
        write_manifest(manifest, out / "manifest.json")
        (out / "truth.json").write_text(
            json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write phantom dataset under {out}: {exc}") from exc
    return manifest
