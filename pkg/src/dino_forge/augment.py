"""Stochastic image pipelines for pretraining and fine-tuning, plus the eval transform.

Images are ``(H, W, 3)`` float arrays in ``[0, 1]``; outputs are normalised
``(S, S, 3)`` float32 arrays.  Every random decision is drawn from an
:class:`RngStream`, so an output depends only on the image and its seed
material.  Decisions are sampled first (``sample_*``) and applied second
(``apply_*``), which lets the statistics tests count them directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torchvision.transforms.v2.functional as TF
from torchvision.transforms import InterpolationMode

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class AugmentConfig:
    image_size: int = 32
    # pretraining crop
    crop_scale: tuple[float, float] = (0.5, 1.0)
    crop_ratio: tuple[float, float] = (3 / 4, 4 / 3)
    # colour jitter (both pipelines)
    jitter_p: float = 0.8
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.2
    hue: float = 0.1
    # pretraining only
    grayscale_p: float = 0.15
    blur_p: float = 0.3
    blur_sigma: tuple[float, float] = (0.1, 1.0)
    equalize_p: float = 0.3
    solarize_p: float = 0.3
    solarize_threshold: float = 0.5
    flip_p: float = 0.5
    # fine-tuning only
    ft_equalize_p: float = 0.3
    autocontrast_p: float = 0.3
    affine_p: float = 1.0
    rotation: float = 5.0
    erase_p: float = 0.5
    erase_scale: tuple[float, float] = (0.01, 0.05)
    erase_ratio: tuple[float, float] = (0.1, 1.0)
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        for name, value in vars(self).items():
            if name.endswith("_p") and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")
        if self.image_size < 2:
            raise ValueError("image_size must be at least 2")
        if not 0 < self.crop_scale[0] <= self.crop_scale[1] <= 1:
            raise ValueError(f"bad crop_scale {self.crop_scale}")
        if not 0 < self.erase_scale[0] <= self.erase_scale[1] < 1:
            raise ValueError(f"bad erase_scale {self.erase_scale}")

    @classmethod
    def identity(cls, image_size: int = 32) -> "AugmentConfig":
        """Every probability and jitter strength at zero."""
        return cls(image_size=image_size, jitter_p=0.0, brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0,
                   grayscale_p=0.0, blur_p=0.0, equalize_p=0.0, solarize_p=0.0, flip_p=0.0, ft_equalize_p=0.0,
                   autocontrast_p=0.0, affine_p=0.0, rotation=0.0, erase_p=0.0)


@dataclass(frozen=True)
class RngStream:
    """Seed material for one augmented view of one sample."""

    seed: int
    index: int = 0
    epoch: int = 0
    view: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.index, self.epoch, self.view])


# ---------------------------------------------------------------------------
# deterministic pixel ops


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.int64)


def equalize(img: np.ndarray) -> np.ndarray:
    """Per-channel histogram equalisation on 256 bins (PIL's lookup-table rule)."""
    out = np.empty_like(img, dtype=np.float32)
    for c in range(img.shape[-1]):
        q = _quantize(img[..., c])
        hist = np.bincount(q.ravel(), minlength=256)
        nonzero = hist[hist > 0]
        step = (hist.sum() - nonzero[-1]) // 255 if nonzero.size > 1 else 0
        if step == 0:
            out[..., c] = q / 255.0
            continue
        lut = np.minimum((np.cumsum(hist) - hist + step // 2) // step, 255)
        out[..., c] = lut[q] / 255.0
    return out


def autocontrast(img: np.ndarray) -> np.ndarray:
    """Per-channel stretch of the occupied 256-bin range onto [0, 255]."""
    out = np.empty_like(img, dtype=np.float32)
    for c in range(img.shape[-1]):
        q = _quantize(img[..., c])
        lo, hi = int(q.min()), int(q.max())
        if hi <= lo:
            out[..., c] = q / 255.0
            continue
        lut = np.clip(np.rint((np.arange(256) - lo) * (255.0 / (hi - lo))), 0, 255)
        out[..., c] = lut[q] / 255.0
    return out


def solarize(img: np.ndarray, threshold: float) -> np.ndarray:
    return np.where(img >= threshold, 1.0 - img, img).astype(np.float32)


def normalize(img: np.ndarray, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> np.ndarray:
    return ((img - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)).astype(np.float32)


def _chw(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)


def _hwc(t: torch.Tensor) -> np.ndarray:
    return t.permute(1, 2, 0).contiguous().numpy()


def resize(img: np.ndarray, size: int) -> np.ndarray:
    """Bicubic (antialiased) resize to ``size x size``, clamped back to [0, 1]."""
    if img.shape[0] == size and img.shape[1] == size:
        return np.asarray(img, dtype=np.float32)
    t = TF.resize(_chw(img), [size, size], interpolation=InterpolationMode.BICUBIC, antialias=True)
    return _hwc(t.clamp_(0.0, 1.0))


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"image {img.shape[0]}x{img.shape[1]} is smaller than 2x2")
    return np.clip(img.astype(np.float32, copy=False), 0.0, 1.0)


# ---------------------------------------------------------------------------
# colour jitter


@dataclass
class JitterParams:
    order: tuple[int, ...]
    brightness: float
    contrast: float
    saturation: float
    hue: float


def _sample_jitter(rng: np.random.Generator, cfg: AugmentConfig) -> JitterParams | None:
    if rng.random() >= cfg.jitter_p:
        return None

    def factor(strength):
        return float(rng.uniform(max(0.0, 1 - strength), 1 + strength))

    return JitterParams(tuple(int(i) for i in rng.permutation(4)), factor(cfg.brightness), factor(cfg.contrast),
                        factor(cfg.saturation), float(rng.uniform(-cfg.hue, cfg.hue)))


def _apply_jitter(img: np.ndarray, j: JitterParams) -> np.ndarray:
    t = _chw(img)
    for op in j.order:
        if op == 0 and j.brightness != 1.0:
            t = TF.adjust_brightness(t, j.brightness)
        elif op == 1 and j.contrast != 1.0:
            t = TF.adjust_contrast(t, j.contrast)
        elif op == 2 and j.saturation != 1.0:
            t = TF.adjust_saturation(t, j.saturation)
        elif op == 3 and j.hue != 0.0:
            t = TF.adjust_hue(t, j.hue)
    return _hwc(t.clamp(0.0, 1.0))


# ---------------------------------------------------------------------------
# pretraining pipeline


@dataclass
class PretrainParams:
    crop: tuple[int, int, int, int]  # top, left, height, width
    jitter: JitterParams | None
    grayscale: bool
    blur_sigma: float | None
    equalize: bool
    solarize: bool
    flip: bool


def _sample_crop(rng: np.random.Generator, h: int, w: int, scale, ratio) -> tuple[int, int, int, int]:
    area = h * w
    log_ratio = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(10):
        target = area * rng.uniform(scale[0], scale[1])
        ar = math.exp(rng.uniform(*log_ratio))
        cw = int(round(math.sqrt(target * ar)))
        ch = int(round(math.sqrt(target / ar)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    # fallback: central crop clamped to the ratio range
    in_ratio = w / h
    if in_ratio < ratio[0]:
        cw, ch = w, int(round(w / ratio[0]))
    elif in_ratio > ratio[1]:
        ch, cw = h, int(round(h * ratio[1]))
    else:
        cw, ch = w, h
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def sample_pretrain_params(rng: np.random.Generator, cfg: AugmentConfig, h: int, w: int) -> PretrainParams:
    crop = _sample_crop(rng, h, w, cfg.crop_scale, cfg.crop_ratio)
    jitter = _sample_jitter(rng, cfg)
    gray = bool(rng.random() < cfg.grayscale_p)
    blur = float(rng.uniform(*cfg.blur_sigma)) if rng.random() < cfg.blur_p else None
    eq = bool(rng.random() < cfg.equalize_p)
    sol = bool(rng.random() < cfg.solarize_p)
    flip = bool(rng.random() < cfg.flip_p)
    return PretrainParams(crop, jitter, gray, blur, eq, sol, flip)


def apply_pretrain(img: np.ndarray, p: PretrainParams, cfg: AugmentConfig, normalize_output: bool = True) -> np.ndarray:
    top, left, ch, cw = p.crop
    x = resize(img[top:top + ch, left:left + cw], cfg.image_size)
    if p.jitter is not None:
        x = _apply_jitter(x, p.jitter)
    if p.grayscale:
        x = _hwc(TF.rgb_to_grayscale(_chw(x), num_output_channels=3))
    if p.blur_sigma is not None:
        k = 2 * math.ceil(3 * p.blur_sigma) + 1
        x = _hwc(TF.gaussian_blur(_chw(x), [k, k], [p.blur_sigma, p.blur_sigma]))
    if p.equalize:
        x = equalize(x)
    if p.solarize:
        x = solarize(x, cfg.solarize_threshold)
    if p.flip:
        x = np.ascontiguousarray(x[:, ::-1])
    x = np.clip(x, 0.0, 1.0)
    return normalize(x, cfg.mean, cfg.std) if normalize_output else x


def pretrain_view(img: np.ndarray, rng: RngStream, cfg: AugmentConfig, normalize_output: bool = True) -> np.ndarray:
    img = _check_image(img)
    params = sample_pretrain_params(rng.generator(), cfg, img.shape[0], img.shape[1])
    return apply_pretrain(img, params, cfg, normalize_output)


def make_global_views(img: np.ndarray, seed: int, index: int, epoch: int, cfg: AugmentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Two independent full-resolution pretraining views; no local crops."""
    return (pretrain_view(img, RngStream(seed, index, epoch, 0), cfg),
            pretrain_view(img, RngStream(seed, index, epoch, 1), cfg))


# ---------------------------------------------------------------------------
# fine-tuning pipeline


@dataclass
class FinetuneParams:
    jitter: JitterParams | None
    flip: bool
    equalize: bool
    autocontrast: bool
    angle: float | None
    erase: tuple[int, int, int, int] | None = field(default=None)  # top, left, height, width


def _sample_erase(rng: np.random.Generator, size: int, cfg: AugmentConfig) -> tuple[int, int, int, int] | None:
    area = size * size
    log_ratio = (math.log(cfg.erase_ratio[0]), math.log(cfg.erase_ratio[1]))
    lo, hi = cfg.erase_scale
    for _ in range(10):
        target = area * rng.uniform(lo, hi)
        ar = math.exp(rng.uniform(*log_ratio))
        eh = int(round(math.sqrt(target * ar)))
        ew = int(round(math.sqrt(target / ar)))
        # integer rounding can push the realised area out of range: resample
        if 0 < eh <= size and 0 < ew <= size and lo <= eh * ew / area <= hi:
            return int(rng.integers(0, size - eh + 1)), int(rng.integers(0, size - ew + 1)), eh, ew
    return None


def sample_finetune_params(rng: np.random.Generator, cfg: AugmentConfig) -> FinetuneParams:
    jitter = _sample_jitter(rng, cfg)
    flip = bool(rng.random() < cfg.flip_p)
    eq = bool(rng.random() < cfg.ft_equalize_p)
    ac = bool(rng.random() < cfg.autocontrast_p)
    angle = float(rng.uniform(-cfg.rotation, cfg.rotation)) if rng.random() < cfg.affine_p else None
    erase = _sample_erase(rng, cfg.image_size, cfg) if rng.random() < cfg.erase_p else None
    return FinetuneParams(jitter, flip, eq, ac, angle, erase)


def apply_finetune(img: np.ndarray, p: FinetuneParams, cfg: AugmentConfig, normalize_output: bool = True) -> np.ndarray:
    x = resize(img, cfg.image_size)
    if p.jitter is not None:
        x = _apply_jitter(x, p.jitter)
    if p.flip:
        x = np.ascontiguousarray(x[:, ::-1])
    if p.equalize:
        x = equalize(x)
    if p.autocontrast:
        x = autocontrast(x)
    if p.angle is not None and p.angle != 0.0:
        x = _hwc(TF.rotate(_chw(x), p.angle, interpolation=InterpolationMode.BILINEAR, fill=[0.0]))
    if p.erase is not None:
        top, left, eh, ew = p.erase
        x = x.copy()
        x[top:top + eh, left:left + ew] = 0.0
    x = np.clip(x, 0.0, 1.0)
    return normalize(x, cfg.mean, cfg.std) if normalize_output else x


def finetune_augment(img: np.ndarray, rng: RngStream, cfg: AugmentConfig, normalize_output: bool = True) -> np.ndarray:
    img = _check_image(img)
    return apply_finetune(img, sample_finetune_params(rng.generator(), cfg), cfg, normalize_output)


def eval_transform(img: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    """Resize and normalise only."""
    return normalize(resize(_check_image(img), cfg.image_size), cfg.mean, cfg.std)
