import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image, ImageOps

from dino_forge import augment as A

CFG = A.AugmentConfig(image_size=32)


def rand_img(seed, h=40, w=48):
    return np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)


def to_pil(img):
    return Image.fromarray(np.clip(np.rint(img * 255), 0, 255).astype(np.uint8))


@pytest.mark.parametrize("seed", range(5))
def test_equalize_matches_pil(seed):
    img = rand_img(seed) ** 2  # skewed histogram
    want = np.asarray(ImageOps.equalize(to_pil(img)), dtype=np.float32) / 255
    assert np.array_equal(A.equalize(img), want)


@pytest.mark.parametrize("seed", range(5))
def test_autocontrast_matches_pil(seed):
    img = 0.2 + 0.5 * rand_img(seed)
    want = np.asarray(ImageOps.autocontrast(to_pil(img)), dtype=np.float32) / 255
    assert np.abs(A.autocontrast(img) - want).max() <= 1 / 255 + 1e-6


def test_solarize():
    x = np.array([[[0.2, 0.5, 0.9]]], dtype=np.float32)
    assert np.allclose(A.solarize(x, 0.5), [[[0.2, 0.5, 0.1]]])


def test_constant_image_equalize_is_identity():
    img = np.full((8, 8, 3), 0.4, dtype=np.float32)
    assert np.allclose(A.equalize(img), np.rint(0.4 * 255) / 255)


def test_views_deterministic_and_distinct():
    img = rand_img(0)
    a0, a1 = A.make_global_views(img, seed=1, index=7, epoch=2, cfg=CFG)
    b0, b1 = A.make_global_views(img, seed=1, index=7, epoch=2, cfg=CFG)
    assert np.array_equal(a0, b0) and np.array_equal(a1, b1)
    assert not np.array_equal(a0, a1)
    c0, _ = A.make_global_views(img, seed=1, index=7, epoch=3, cfg=CFG)
    assert not np.array_equal(a0, c0)
    assert a0.shape == (32, 32, 3) and a0.dtype == np.float32


def test_identity_config_is_resize_plus_normalise():
    img = rand_img(2, 32, 32)
    ident = A.AugmentConfig.identity(32)
    ident = A.AugmentConfig(**{**vars(ident), "crop_scale": (1.0, 1.0), "crop_ratio": (1.0, 1.0)})
    out = A.pretrain_view(img, A.RngStream(0), ident)
    assert np.allclose(out, A.eval_transform(img, ident), atol=1e-6)
    ft = A.finetune_augment(img, A.RngStream(0), A.AugmentConfig.identity(32))
    assert np.allclose(ft, A.eval_transform(img, ident), atol=1e-6)


@given(st.integers(0, 2**31 - 1), st.integers(8, 64), st.integers(8, 64))
@settings(max_examples=60, deadline=None)
def test_crop_inside_image(seed, h, w):
    top, left, ch, cw = A._sample_crop(np.random.default_rng(seed), h, w, CFG.crop_scale, CFG.crop_ratio)
    assert 0 <= top and 0 <= left and top + ch <= h and left + cw <= w and ch > 0 and cw > 0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_outputs_bounded_before_normalisation(seed):
    img = rand_img(seed % 1000, 36, 36)
    x = A.pretrain_view(img, A.RngStream(seed), CFG, normalize_output=False)
    y = A.finetune_augment(img, A.RngStream(seed), CFG, normalize_output=False)
    for z in (x, y):
        assert z.min() >= 0 and z.max() <= 1 and np.isfinite(z).all()


def test_erase_area_in_range():
    rng = np.random.default_rng(0)
    for _ in range(500):
        e = A._sample_erase(rng, 32, CFG)
        if e is not None:
            _, _, eh, ew = e
            assert 0.01 <= eh * ew / 32 ** 2 <= 0.05


def test_invalid_inputs():
    with pytest.raises(ValueError):
        A.AugmentConfig(grayscale_p=1.5)
    with pytest.raises(ValueError):
        A.pretrain_view(np.zeros((4, 4)), A.RngStream(0), CFG)
    with pytest.raises(ValueError):
        A.pretrain_view(np.zeros((1, 5, 3)), A.RngStream(0), CFG)


def band(n, p):
    return n * p, 3 * math.sqrt(n * p * (1 - p))


def pretrain_rates(n=10_000):
    draws = [A.sample_pretrain_params(A.RngStream(0, i).generator(), CFG, 64, 64) for i in range(n)]
    return {
        "jitter": (sum(d.jitter is not None for d in draws), CFG.jitter_p),
        "grayscale": (sum(d.grayscale for d in draws), CFG.grayscale_p),
        "blur": (sum(d.blur_sigma is not None for d in draws), CFG.blur_p),
        "equalize": (sum(d.equalize for d in draws), CFG.equalize_p),
        "solarize": (sum(d.solarize for d in draws), CFG.solarize_p),
        "flip": (sum(d.flip for d in draws), CFG.flip_p),
    }


def finetune_rates(n=10_000):
    draws = [A.sample_finetune_params(A.RngStream(0, i).generator(), CFG) for i in range(n)]
    return {
        "ft_jitter": (sum(d.jitter is not None for d in draws), CFG.jitter_p),
        "ft_flip": (sum(d.flip for d in draws), CFG.flip_p),
        "ft_equalize": (sum(d.equalize for d in draws), CFG.ft_equalize_p),
        "autocontrast": (sum(d.autocontrast for d in draws), CFG.autocontrast_p),
        "erase": (sum(d.erase is not None for d in draws), CFG.erase_p),
    }


def test_probability_rates_within_3_sigma():
    for name, (count, p) in {**pretrain_rates(), **finetune_rates()}.items():
        mean, tol = band(10_000, p)
        assert abs(count - mean) <= tol, (name, count, mean, tol)
