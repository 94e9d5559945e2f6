import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oct_triage.domain import BScan
from oct_triage.preprocess import (
    AugmentParams,
    ConcreteAugmentation,
    IDENTITY_AUGMENTATION,
    apply_augmentation,
    normalize,
    sample_augmentation,
)


class TestNormalize:
    def test_resamples_to_target_and_range(self, random_bscan):
        out = normalize(random_bscan(256, 512), target=(224, 224))
        assert out.shape == (224, 224)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_constant_255_maps_to_one(self):
        scan = BScan(pixels=np.full((64, 32), 255, dtype=np.uint8), index=0)
        out = normalize(scan, target=(16, 16))
        assert np.all(out == 1.0)

    def test_identity_resample_is_exact(self, random_bscan):
        scan = random_bscan(48, 48, seed=9)
        out = normalize(scan, target=(48, 48))
        assert np.array_equal(out, scan.pixels.astype(np.float64) / 255.0)

    @given(
        st.integers(8, 80),
        st.integers(8, 80),
        st.integers(8, 40),
        st.integers(8, 40),
        st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_output_always_canonical(self, h, w, th, tw, seed):
        rng = np.random.default_rng(seed)
        scan = BScan(pixels=rng.integers(0, 256, (h, w), dtype=np.uint8), index=0)
        out = normalize(scan, target=(th, tw))
        assert out.shape == (th, tw)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSampleAugmentation:
    def test_zero_params_give_identity_for_any_seed(self):
        for seed in (0, 1, 12345):
            aug = sample_augmentation(AugmentParams.identity(), seed, 3, 7)
            assert aug.is_identity

    def test_deterministic_per_key(self):
        params = AugmentParams()
        a = sample_augmentation(params, 1, 0, 5)
        b = sample_augmentation(params, 1, 0, 5)
        assert a == b
        assert sample_augmentation(params, 1, 1, 5) != a
        assert sample_augmentation(params, 2, 0, 5) != a

    def test_rotation_draws_uniform_in_range(self):
        params = AugmentParams(rotation=10.0, translation=0.0, zoom=0.0, brightness=0.0)
        draws = np.array(
            [sample_augmentation(params, 99, 0, i).rotation for i in range(10_000)]
        )
        assert np.all(draws >= -10.0) and np.all(draws <= 10.0)
        assert abs(draws.mean()) < 0.5

    def test_negative_ranges_rejected(self):
        with pytest.raises(ValueError):
            AugmentParams(rotation=-1.0)


class TestApplyAugmentation:
    def test_identity_is_bit_exact_noop(self):
        rng = np.random.default_rng(2)
        img = rng.random((32, 40))
        out = apply_augmentation(img, IDENTITY_AUGMENTATION)
        assert out is not img
        assert np.array_equal(out, img)

    def test_brightness_only_shifts_constant_image(self):
        img = np.full((16, 16), 0.5)
        aug = ConcreteAugmentation(0.0, 0.0, 0.0, 1.0, 0.2)
        out = apply_augmentation(img, aug)
        assert np.allclose(out, 0.7, atol=1e-12)

    def test_brightness_clamps(self):
        img = np.full((16, 16), 0.95)
        out = apply_augmentation(img, ConcreteAugmentation(0.0, 0.0, 0.0, 1.0, 0.2))
        assert np.all(out == 1.0)

    def test_double_180_rotation_recovers_image(self):
        # zero-filled borders keep content inside the frame under rotation
        rng = np.random.default_rng(4)
        img = np.zeros((48, 48))
        img[12:36, 12:36] = rng.random((24, 24))
        rot = ConcreteAugmentation(180.0, 0.0, 0.0, 1.0, 0.0)
        out = apply_augmentation(apply_augmentation(img, rot), rot)
        assert np.max(np.abs(out - img)) < 0.02

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_shape_and_range_preserved(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((24, 32))
        aug = sample_augmentation(AugmentParams(), seed, 0, 0)
        out = apply_augmentation(img, aug)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_translation_moves_content(self):
        img = np.zeros((32, 32))
        img[14:18, 14:18] = 1.0
        aug = ConcreteAugmentation(0.0, 0.25, 0.0, 1.0, 0.0)  # shift right 8 px
        out = apply_augmentation(img, aug)
        assert out[14:18, 22:26].min() > 0.9
        assert out[14:18, 14:18].max() < 0.1
