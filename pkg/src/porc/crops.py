"""Multi-crop augmentation: global/local random resized crops plus photometric ops.

Every stochastic decision is drawn from one seeded generator in a fixed
order, so a (patch, config, seed) triple always produces byte-identical
views. Each view carries a log entry per transform stage with the sampled
parameters, including the stages that were skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError

# Rec. 601 luma weights, used for grayscale and saturation adjustments
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class CropConfig:
    global_count: int = 2
    global_size: int = 224
    global_scale: tuple[float, float] = (0.48, 1.0)
    local_count: int = 8
    local_size: int = 96
    local_scale: tuple[float, float] = (0.16, 0.48)
    hflip_p: float = 0.5
    jitter_p: float = 0.8
    jitter_strength: float = 0.4
    grayscale_p: float = 0.2
    blur_p_first_global: float = 0.5
    blur_p_other: float = 0.1
    blur_sigma: tuple[float, float] = (0.1, 2.0)

    def __post_init__(self):
        for lo, hi in (self.global_scale, self.local_scale):
            if not (0.0 < lo <= hi <= 1.0):
                raise ConfigError(f"CropConfig: scale range ({lo}, {hi}) invalid")
        if self.global_count < 0 or self.local_count < 0:
            raise ConfigError("CropConfig: crop counts must be >= 0")
        if min(self.global_size, self.local_size) < 1:
            raise ConfigError("CropConfig: crop sizes must be >= 1")
        for p in (self.hflip_p, self.jitter_p, self.grayscale_p, self.blur_p_first_global, self.blur_p_other):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("CropConfig: probabilities must lie in [0, 1]")


@dataclass
class CropSet:
    """Augmented views of one patch: globals first, then locals."""

    views: list[np.ndarray]
    log: list[list[dict]]
    global_count: int

    @property
    def globals(self) -> list[np.ndarray]:
        return self.views[: self.global_count]

    @property
    def locals(self) -> list[np.ndarray]:
        return self.views[self.global_count :]


def _sample_crop_box(rng, h, w, scale):
    """torchvision-style random resized crop box; whole image on fallback."""
    for _ in range(10):
        area = rng.uniform(scale[0], scale[1]) * h * w
        log_ratio = rng.uniform(math.log(3.0 / 4.0), math.log(4.0 / 3.0))
        ratio = math.exp(log_ratio)
        cw = int(round(math.sqrt(area * ratio)))
        ch = int(round(math.sqrt(area / ratio)))
        if 0 < cw <= w and 0 < ch <= h:
            x0 = int(rng.integers(0, w - cw + 1))
            y0 = int(rng.integers(0, h - ch + 1))
            return x0, y0, cw, ch
    return 0, 0, w, h


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to size x size with half-pixel-center alignment."""
    h, w = image.shape[:2]
    if h == size and w == size:
        return image.astype(np.float64, copy=True)
    src = image.astype(np.float64)

    def axis_coords(n_src, n_dst):
        pos = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
        pos = np.clip(pos, 0.0, n_src - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, pos - lo

    ylo, yhi, wy = axis_coords(h, size)
    xlo, xhi, wx = axis_coords(w, size)
    top = src[ylo][:, xlo] * (1 - wx)[None, :, None] + src[ylo][:, xhi] * wx[None, :, None]
    bot = src[yhi][:, xlo] * (1 - wx)[None, :, None] + src[yhi][:, xhi] * wx[None, :, None]
    return top * (1 - wy)[:, None, None] + bot * wy[:, None, None]


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1].copy()


def _apply_jitter(img, rng, strength):
    fb = rng.uniform(1.0 - strength, 1.0 + strength)
    fc = rng.uniform(1.0 - strength, 1.0 + strength)
    fs = rng.uniform(1.0 - strength, 1.0 + strength)
    img = img * fb
    mean_luma = float((img @ _LUMA).mean())
    img = mean_luma + (img - mean_luma) * fc
    luma = (img @ _LUMA)[..., None]
    img = luma + (img - luma) * fs
    return img, {"brightness": fb, "contrast": fc, "saturation": fs}


def _augment_view(patch, rng, size, scale, blur_p, config):
    h, w = patch.shape[:2]
    log: list[dict] = []

    x0, y0, cw, ch = _sample_crop_box(rng, h, w, scale)
    view = patch[y0 : y0 + ch, x0 : x0 + cw].astype(np.float64)
    log.append({"op": "crop", "x": x0, "y": y0, "w": cw, "h": ch})

    view = resize_bilinear(view, size)
    log.append({"op": "resize", "size": size})

    flip = bool(rng.random() < config.hflip_p)
    if flip:
        view = hflip(view)
    log.append({"op": "hflip", "applied": flip})

    jit = bool(rng.random() < config.jitter_p)
    if jit:
        view, factors = _apply_jitter(view, rng, config.jitter_strength)
        log.append({"op": "color_jitter", "applied": True, **factors})
    else:
        log.append({"op": "color_jitter", "applied": False})

    gray = bool(rng.random() < config.grayscale_p)
    if gray:
        view = np.repeat((view @ _LUMA)[..., None], 3, axis=2)
    log.append({"op": "grayscale", "applied": gray})

    blur = bool(rng.random() < blur_p)
    if blur:
        sigma = rng.uniform(*config.blur_sigma)
        view = gaussian_filter(view, sigma=(sigma, sigma, 0.0), mode="nearest")
        log.append({"op": "blur", "applied": True, "sigma": sigma})
    else:
        log.append({"op": "blur", "applied": False})

    return np.clip(np.rint(view), 0, 255).astype(np.uint8), log


def make_crop_set(patch: np.ndarray, config: CropConfig, seed: int) -> CropSet:
    """Build the configured global+local views of one patch, deterministically."""
    p = np.asarray(patch)
    if p.ndim != 3 or p.shape[2] != 3:
        raise ConfigError(f"make_crop_set: expected (H, W, 3) patch, got {p.shape}")
    if min(p.shape[0], p.shape[1]) < max(config.global_size, config.local_size):
        raise ConfigError(
            f"make_crop_set: patch {p.shape[1]}x{p.shape[0]} smaller than the "
            f"largest configured crop"
        )
    rng = np.random.default_rng(seed)
    views, logs = [], []
    for i in range(config.global_count):
        blur_p = config.blur_p_first_global if i == 0 else config.blur_p_other
        v, lg = _augment_view(p, rng, config.global_size, config.global_scale, blur_p, config)
        views.append(v)
        logs.append(lg)
    for _ in range(config.local_count):
        v, lg = _augment_view(p, rng, config.local_size, config.local_scale, config.blur_p_other, config)
        views.append(v)
        logs.append(lg)
    return CropSet(views=views, log=logs, global_count=config.global_count)
