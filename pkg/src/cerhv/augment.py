"""Seeded training-time image augmentation.

Each op fires independently with its configured probability; all randomness
flows from one ``numpy`` generator seeded per call, so the same (image, seed,
config) triple always produces the same output. Magnitudes live in the config
so experiments can pin them.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np


@dataclass(frozen=True)
class AugmentConfig:
    affine_prob: float = 0.5
    max_rotation_deg: float = 2.0
    max_shear_deg: float = 5.0
    grid_prob: float = 0.2
    grid_cells: int = 4
    grid_mag: float = 2.0
    elastic_prob: float = 0.2
    elastic_alpha: float = 8.0
    elastic_sigma: float = 4.0
    noise_prob: float = 0.3
    noise_sigma: float = 0.02  # fraction of the 0..255 dynamic range
    jitter_prob: float = 0.3
    brightness_delta: float = 0.1
    contrast_delta: float = 0.1
    morph_prob: float = 0.15

    def __post_init__(self):
        for name in ("affine_prob", "grid_prob", "elastic_prob", "noise_prob",
                     "jitter_prob", "morph_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(affine_prob=0.0, grid_prob=0.0, elastic_prob=0.0,
                   noise_prob=0.0, jitter_prob=0.0, morph_prob=0.0)


def _border_fill(img: np.ndarray) -> int:
    return int(np.median(img))


def _affine(img, rng, cfg):
    h, w = img.shape
    angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    shear = np.tan(np.deg2rad(rng.uniform(-cfg.max_shear_deg, cfg.max_shear_deg)))
    mat = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    # shear about the vertical midline so content stays roughly centered
    mat[0, 1] += shear
    mat[0, 2] -= shear * h / 2.0
    return cv2.warpAffine(img, mat, (w, h), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=_border_fill(img))


def _remap(img, dx, dy):
    h, w = img.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    return cv2.remap(img, xs + dx.astype(np.float32), ys + dy.astype(np.float32),
                     interpolation=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT,
                     borderValue=_border_fill(img))


def _grid_distort(img, rng, cfg):
    h, w = img.shape
    n = cfg.grid_cells
    node_dx = rng.uniform(-cfg.grid_mag, cfg.grid_mag, size=(n + 1, n + 1))
    node_dy = rng.uniform(-cfg.grid_mag, cfg.grid_mag, size=(n + 1, n + 1))
    dx = cv2.resize(node_dx, (w, h), interpolation=cv2.INTER_LINEAR)
    dy = cv2.resize(node_dy, (w, h), interpolation=cv2.INTER_LINEAR)
    return _remap(img, dx, dy)


def _elastic(img, rng, cfg):
    h, w = img.shape
    k = 2 * int(3 * cfg.elastic_sigma) + 1
    dx = rng.uniform(-1, 1, size=(h, w))
    dy = rng.uniform(-1, 1, size=(h, w))
    dx = cv2.GaussianBlur(dx, (k, k), cfg.elastic_sigma) * cfg.elastic_alpha
    dy = cv2.GaussianBlur(dy, (k, k), cfg.elastic_sigma) * cfg.elastic_alpha
    return _remap(img, dx, dy)


def _gauss_noise(img, rng, cfg):
    noise = rng.normal(0.0, cfg.noise_sigma * 255.0, size=img.shape)
    return np.clip(img.astype(np.float64) + noise, 0, 255).astype(np.uint8)


def _jitter(img, rng, cfg):
    gain = 1.0 + rng.uniform(-cfg.contrast_delta, cfg.contrast_delta)
    bias = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta) * 255.0
    mid = float(np.mean(img))
    out = (img.astype(np.float64) - mid) * gain + mid + bias
    return np.clip(out, 0, 255).astype(np.uint8)


def _morph(img, rng, cfg):
    kernel = np.ones((2, 2), dtype=np.uint8)
    if rng.random() < 0.5:
        return cv2.erode(img, kernel)
    return cv2.dilate(img, kernel)


_OPS = (
    ("affine_prob", _affine),
    ("grid_prob", _grid_distort),
    ("elastic_prob", _elastic),
    ("noise_prob", _gauss_noise),
    ("jitter_prob", _jitter),
    ("morph_prob", _morph),
)


def augment(image: np.ndarray, seed: int, config: AugmentConfig | None = None) -> np.ndarray:
    """Apply a seeded random subset of the configured distortions.

    Output dtype uint8 and dims always equal the input's; with all
    probabilities zero the input comes back byte-identical.
    """
    cfg = config if config is not None else AugmentConfig()
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    img = img.astype(np.uint8)
    rng = np.random.default_rng(seed)
    out = img
    for prob_name, op in _OPS:
        if rng.random() < getattr(cfg, prob_name):
            out = op(out, rng, cfg)
    return out
