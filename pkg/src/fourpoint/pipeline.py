"""Glue between raw samples, the four-point warp and the toy network."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .config import RunConfig
from .data.augment import augment
from .data.palette import DEFAULT_PALETTE, ClassPalette
from .geometry import BoundingBox, expand_box
from .micronet.model import NetConfig, ParamStore
from .micronet.train import predict
from .resample import FourPointTransform, warp_labels


def make_transform(src_hw, box: BoundingBox, cfg: RunConfig) -> FourPointTransform:
    return FourPointTransform(tuple(src_hw), cfg.out_size, expand_box(box, cfg.zoom),
                              cfg.warp_mode, cfg.partition_mode)


def warp_sample(img, labels, box, cfg: RunConfig, palette: ClassPalette = DEFAULT_PALETTE):
    t = make_transform(labels.shape, box, cfg)
    return t.warp(img), warp_labels(labels, len(palette), None, transform=t)


def warp_dataset(samples, cfg: RunConfig, palette: ClassPalette = DEFAULT_PALETTE):
    """Stack warped images ``(N, S, S, 3)`` and labels ``(N, S, S)``."""
    pairs = [warp_sample(img, lab, box, cfg, palette) for img, lab, box in samples]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def augmenting_sampler(samples, cfg: RunConfig, palette: ClassPalette = DEFAULT_PALETTE):
    """``sample_fn`` for :func:`~fourpoint.micronet.train.train` drawing fresh augmentations.

    Each (iteration, index) pair gets its own seed, so runs are repeatable.
    """
    def sample(indices, iteration):
        xs, ys = [], []
        for i in indices:
            img, lab, box = samples[int(i)]
            img, lab, box = augment(img, lab, box, seed=[cfg.seed, iteration, int(i)])
            x, y = warp_sample(img, lab, box, cfg, palette)
            xs.append(x)
            ys.append(y)
        return np.stack(xs), np.stack(ys)

    return sample


def predict_restored(params: ParamStore, net: NetConfig, img, box, cfg: RunConfig) -> np.ndarray:
    """Predict in warped space, restore class scores to the image, then argmax.

    Pixels no chart covers fall back to class 0.
    """
    t = make_transform(img.shape[:2], box, cfg)
    probs = predict(params, t.warp(img)[None], net)[0]
    scores = t.restore(probs)
    return np.argmax(scores, axis=2)


def smooth_noise_image(size: int, seed: int = 0, channels: int = 3) -> np.ndarray:
    """Seeded test image: uniform noise blurred with sigma = size/32, rescaled to [0, 1].

    Band-limited content is what a resampler can be held to; white noise
    aliases at any canvas resolution.
    """
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(size, size, channels))
    sm = gaussian_filter(raw, sigma=(size / 32.0, size / 32.0, 0), mode="wrap")
    lo = sm.min(axis=(0, 1), keepdims=True)
    hi = sm.max(axis=(0, 1), keepdims=True)
    return (sm - lo) / np.maximum(hi - lo, 1e-12)
