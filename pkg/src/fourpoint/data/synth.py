"""Procedural occluded-face generator used in place of a real parsing dataset.

Faces are built from ellipses and rectangles in face-normalized coordinates
``u = (x - cx) / ax``, ``v = (y - cy) / ay`` so the layout is identical at
every resolution.  Occluders are painted last, over both the image and the
labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry import BoundingBox
from .palette import DEFAULT_PALETTE

OCCLUDERS = ("hand_occ", "e_glasses", "sunglasses", "m_mask")

# (class name, u center, v center, u semi-axis, v semi-axis), painted in order
_PARTS = (
    ("l_brow", -0.40, -0.42, 0.24, 0.07),
    ("r_brow", 0.40, -0.42, 0.24, 0.07),
    ("l_eye", -0.38, -0.20, 0.17, 0.09),
    ("r_eye", 0.38, -0.20, 0.17, 0.09),
    ("nose", 0.00, 0.10, 0.13, 0.20),
    ("u_lip", 0.00, 0.45, 0.34, 0.07),
    ("l_lip", 0.00, 0.58, 0.30, 0.08),
    ("inner_mouth", 0.00, 0.515, 0.26, 0.045),
)

_BASE_RGB = {
    "background": (0.35, 0.45, 0.40),
    "skin": (0.85, 0.65, 0.52),
    "l_brow": (0.30, 0.20, 0.12),
    "r_brow": (0.30, 0.20, 0.12),
    "l_eye": (0.95, 0.95, 0.95),
    "r_eye": (0.95, 0.95, 0.95),
    "nose": (0.78, 0.55, 0.42),
    "u_lip": (0.75, 0.30, 0.32),
    "l_lip": (0.80, 0.35, 0.38),
    "inner_mouth": (0.30, 0.05, 0.08),
    "hand_occ": (0.95, 0.78, 0.60),
    "e_glasses": (0.10, 0.10, 0.35),
    "sunglasses": (0.05, 0.05, 0.05),
    "m_mask": (0.55, 0.75, 0.95),
}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    count: int = 8
    size: int = 64
    occlusion: dict = field(default_factory=lambda: {k: 0.0 for k in OCCLUDERS})
    face_scale: tuple[float, float] = (0.18, 0.24)
    aspect: tuple[float, float] = (1.15, 1.35)
    jitter: float = 0.04

    def __post_init__(self):
        if self.size <= 0 or self.size % 2:
            raise InvalidArgumentError(f"size must be a positive even number, got {self.size}")
        if self.count < 0:
            raise InvalidArgumentError("count must be non-negative")
        unknown = set(self.occlusion) - set(OCCLUDERS)
        if unknown:
            raise InvalidArgumentError(f"unknown occluder types {sorted(unknown)}")
        for k, p in self.occlusion.items():
            if not 0.0 <= p <= 1.0:
                raise InvalidArgumentError(f"occlusion probability for {k} must be in [0, 1]")

    def probability(self, kind: str) -> float:
        return float(self.occlusion.get(kind, 0.0))


def _ellipse(u, v, cu, cv, su, sv):
    return ((u - cu) / su) ** 2 + ((v - cv) / sv) ** 2 <= 1.0


def _paint(img, labels, mask, cls, rgb, rng, palette):
    labels[mask] = palette.index(cls)
    tint = np.clip(np.asarray(rgb) + rng.normal(0.0, 0.04, 3), 0.0, 1.0)
    img[mask] = tint


def synth_sample(spec: SynthSpec, index: int, palette=DEFAULT_PALETTE):
    """Generate sample ``index`` of ``spec`` (independent of every other index)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    s = spec.size
    ys, xs = np.mgrid[0:s, 0:s].astype(np.float64)

    ax = s * rng.uniform(*spec.face_scale)
    ay = min(ax * rng.uniform(*spec.aspect), 0.45 * s)
    cx = float(np.clip(0.5 * s + rng.uniform(-0.05, 0.05) * s, ax + 1.0, s - ax - 1.0))
    cy = float(np.clip(0.5 * s + rng.uniform(-0.05, 0.05) * s, ay + 1.0, s - ay - 1.0))
    u = (xs - cx) / ax
    v = (ys - cy) / ay

    # background: smooth two-color gradient
    c0 = np.clip(np.asarray(_BASE_RGB["background"]) + rng.normal(0, 0.08, 3), 0, 1)
    c1 = np.clip(c0 + rng.normal(0, 0.15, 3), 0, 1)
    t = (xs / s * rng.uniform(0.3, 1.0) + ys / s * rng.uniform(0.3, 1.0)) / 2.0
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]
    labels = np.zeros((s, s), dtype=np.int64)

    _paint(img, labels, u ** 2 + v ** 2 <= 1.0, "skin", _BASE_RGB["skin"], rng, palette)
    for name, cu, cv, su, sv in _PARTS:
        j = spec.jitter
        m = _ellipse(u, v, cu + rng.uniform(-j, j), cv + rng.uniform(-j, j), su, sv)
        _paint(img, labels, m, name, _BASE_RGB[name], rng, palette)

    occ = {k: rng.random() < spec.probability(k) for k in OCCLUDERS}
    if occ["sunglasses"]:
        occ["e_glasses"] = False
    if occ["m_mask"]:
        m = (np.abs(u) <= 0.78) & (v >= 0.18) & (v <= 0.95) & (u ** 2 + v ** 2 <= 1.08)
        _paint(img, labels, m, "m_mask", _BASE_RGB["m_mask"], rng, palette)
    if occ["sunglasses"]:
        m = _ellipse(u, v, -0.38, -0.20, 0.27, 0.17) | _ellipse(u, v, 0.38, -0.20, 0.27, 0.17)
        m |= (np.abs(u) <= 0.14) & (np.abs(v + 0.24) <= 0.025)
        _paint(img, labels, m, "sunglasses", _BASE_RGB["sunglasses"], rng, palette)
    if occ["e_glasses"]:
        m = np.zeros_like(labels, dtype=bool)
        for cu in (-0.38, 0.38):
            m |= _ellipse(u, v, cu, -0.20, 0.29, 0.19) & ~_ellipse(u, v, cu, -0.20, 0.22, 0.13)
        m |= (np.abs(u) <= 0.12) & (np.abs(v + 0.24) <= 0.03)
        _paint(img, labels, m, "e_glasses", _BASE_RGB["e_glasses"], rng, palette)
    if occ["hand_occ"]:
        side = rng.choice([-1.0, 1.0])
        hu, hv = side * rng.uniform(0.3, 0.7), rng.uniform(-0.1, 0.6)
        m = _ellipse(u, v, hu, hv, rng.uniform(0.3, 0.45), rng.uniform(0.35, 0.55))
        _paint(img, labels, m, "hand_occ", _BASE_RGB["hand_occ"], rng, palette)

    shade = 1.0 + 0.08 * np.sin(xs / s * rng.uniform(2, 5) + rng.uniform(0, 6))[..., None]
    img = np.clip(img * shade + rng.normal(0.0, 0.01, img.shape), 0.0, 1.0)
    box = BoundingBox(max(cx - ax, 0.0), max(cy - ay, 0.0), min(cx + ax, float(s)), min(cy + ay, float(s)))
    return img, labels, box


def synth_generate(spec: SynthSpec, palette=DEFAULT_PALETTE):
    """List of ``(image, labels, box)`` triples; a pure function of ``spec``."""
    return [synth_sample(spec, i, palette) for i in range(spec.count)]
