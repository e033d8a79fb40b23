"""Multi-crop pipeline: counts, sizes, determinism, identity path, logging."""

import numpy as np
import pytest

from porc.crops import CropConfig, hflip, make_crop_set, resize_bilinear
from porc.errors import ConfigError


def source_patch(seed=0, size=256):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


class TestCropSet:
    def test_default_counts_and_sizes(self):
        cs = make_crop_set(source_patch(), CropConfig(), seed=0)
        assert len(cs.views) == 10
        assert len(cs.globals) == 2 and len(cs.locals) == 8
        for v in cs.globals:
            assert v.shape == (224, 224, 3) and v.dtype == np.uint8
        for v in cs.locals:
            assert v.shape == (96, 96, 3) and v.dtype == np.uint8

    def test_same_seed_byte_identical(self):
        patch = source_patch(1)
        a = make_crop_set(patch, CropConfig(), seed=42)
        b = make_crop_set(patch, CropConfig(), seed=42)
        for va, vb in zip(a.views, b.views):
            np.testing.assert_array_equal(va, vb)
        assert a.log == b.log

    def test_different_seed_differs(self):
        patch = source_patch(2)
        a = make_crop_set(patch, CropConfig(), seed=1)
        b = make_crop_set(patch, CropConfig(), seed=2)
        assert any((va != vb).any() for va, vb in zip(a.views, b.views))

    def test_no_aug_global_views_are_resized_copies(self):
        cfg = CropConfig(
            global_scale=(1.0, 1.0),
            local_scale=(1.0, 1.0),
            hflip_p=0.0,
            jitter_p=0.0,
            grayscale_p=0.0,
            blur_p_first_global=0.0,
            blur_p_other=0.0,
        )
        patch = source_patch(3)
        cs = make_crop_set(patch, cfg, seed=0)
        expect = np.clip(np.rint(resize_bilinear(patch.astype(np.float64), 224)), 0, 255).astype(np.uint8)
        for v in cs.globals:
            np.testing.assert_array_equal(v, expect)

    def test_identity_when_source_matches_target(self):
        cfg = CropConfig(
            global_size=256,
            local_size=96,
            global_scale=(1.0, 1.0),
            hflip_p=0.0,
            jitter_p=0.0,
            grayscale_p=0.0,
            blur_p_first_global=0.0,
            blur_p_other=0.0,
        )
        patch = source_patch(4)
        cs = make_crop_set(patch, cfg, seed=0)
        np.testing.assert_array_equal(cs.globals[0], patch)

    def test_log_records_every_stage(self):
        cs = make_crop_set(source_patch(5), CropConfig(), seed=7)
        assert len(cs.log) == 10
        for entry in cs.log:
            assert [e["op"] for e in entry] == [
                "crop",
                "resize",
                "hflip",
                "color_jitter",
                "grayscale",
                "blur",
            ]

    def test_too_small_patch_rejected(self):
        with pytest.raises(ConfigError, match="smaller"):
            make_crop_set(source_patch(6, size=128), CropConfig(), seed=0)

    def test_local_scale_upper_bound_respected(self):
        patch = source_patch(7)
        cs = make_crop_set(patch, CropConfig(), seed=11)
        for entry in cs.log[2:]:
            crop = entry[0]
            area_frac = crop["w"] * crop["h"] / (256.0 * 256.0)
            assert area_frac <= 0.48 * (4.0 / 3.0) + 1e-6


class TestPrimitives:
    def test_flip_is_involution(self):
        patch = source_patch(8).astype(np.float64)
        np.testing.assert_array_equal(hflip(hflip(patch)), patch)

    def test_resize_identity_when_same_size(self):
        patch = source_patch(9, size=64).astype(np.float64)
        np.testing.assert_array_equal(resize_bilinear(patch, 64), patch)

    def test_resize_constant_preserved(self):
        img = np.full((128, 128, 3), 99.0)
        out = resize_bilinear(img, 96)
        np.testing.assert_allclose(out, 99.0, atol=1e-9)

    def test_resize_upscale_half_pixel_centers(self):
        # 2 -> 4 upscale of columns [0, 100]: centers land at
        # src positions [-.25, .25, .75, 1.25] -> [0, 25, 75, 100]
        img = np.zeros((2, 2, 3))
        img[:, 1] = 100.0
        out = resize_bilinear(img, 4)
        np.testing.assert_allclose(out[0, :, 0], [0.0, 25.0, 75.0, 100.0], atol=1e-9)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            CropConfig(global_scale=(0.0, 1.0))
        with pytest.raises(ConfigError):
            CropConfig(hflip_p=1.5)
