"""Occlusion-aware segmentation loss and F1 evaluation.

Score maps are ``(..., H, W, K)`` probability arrays and label maps the
matching ``(..., H, W)`` integer arrays; a leading batch axis is optional.
All reductions use numpy's pairwise summation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .data.palette import DEFAULT_PALETTE, ClassPalette
from .errors import InvalidArgumentError

LOG_CLAMP = 1e-12
DICE_EPS = 1e-12

# What d contributes when exactly one of the two maps has no boundary pixels.
EMPTY_FALLBACKS = ("diagonal", "zero")


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    dice: float
    occ_penalty: float
    weight_l: float
    alpha: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _check_pair(s, g):
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g)
    if s.ndim < 3 or s.shape[:-1] != g.shape:
        raise InvalidArgumentError(f"score map {s.shape} does not match label map {g.shape}")
    k = s.shape[-1]
    if g.size and (g.min() < 0 or g.max() >= k):
        raise InvalidArgumentError(f"label index out of range for {k} classes")
    return s, g


def one_hot(labels, num_classes: int) -> np.ndarray:
    g = np.asarray(labels)
    return (g[..., None] == np.arange(num_classes)).astype(np.float64)


def cross_entropy(s, g) -> float:
    """Mean negative log-probability of the true class over all pixels."""
    s, g = _check_pair(s, g)
    p_true = np.take_along_axis(s, g[..., None], axis=-1)[..., 0]
    return float(-np.mean(np.log(np.maximum(p_true, LOG_CLAMP))))


def dice_loss(s, g_onehot) -> float:
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g_onehot, dtype=np.float64)
    if s.shape != g.shape:
        raise InvalidArgumentError(f"shape mismatch {s.shape} vs {g.shape}")
    inter = np.sum(g * s)
    return float(1.0 - 2.0 * inter / (np.sum(g * g) + np.sum(s * s) + DICE_EPS))


def occlusion_value_map(g, palette: ClassPalette = DEFAULT_PALETTE) -> np.ndarray:
    """Per-pixel mean of the occluder indicator over the in-image 3x3 neighborhood."""
    g = np.asarray(g)
    if g.size and (g.min() < 0 or g.max() >= len(palette)):
        raise InvalidArgumentError(f"label index out of range for palette of {len(palette)}")
    occ = np.isin(g, palette.occlusion).astype(np.float64)
    ones = np.ones(g.shape[-2:])
    return _box3_sum(occ) / _box3_sum(ones)


def _box3_sum(a: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (a.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(a, pad)
    h, w = a.shape[-2:]
    return sum(p[..., i:i + h, j:j + w] for i in range(3) for j in range(3))


def boundary_mask(labels) -> np.ndarray:
    """Pixels with at least one 4-neighbor of a different class."""
    g = np.asarray(labels)
    m = np.zeros(g.shape, dtype=bool)
    dv = g[..., 1:, :] != g[..., :-1, :]
    dh = g[..., :, 1:] != g[..., :, :-1]
    m[..., 1:, :] |= dv
    m[..., :-1, :] |= dv
    m[..., :, 1:] |= dh
    m[..., :, :-1] |= dh
    return m


def _check_fallback(empty_fallback: str) -> None:
    if empty_fallback not in EMPTY_FALLBACKS:
        raise InvalidArgumentError(f"empty_fallback must be one of {EMPTY_FALLBACKS}, got {empty_fallback!r}")


def boundary_distance(pred, g, empty_fallback: str = "diagonal") -> float:
    """Symmetric mean nearest-boundary distance between two 2-D label maps.

    When only one map has boundary pixels the distance is undefined; it is
    then the image diagonal (``"diagonal"``) or 0 (``"zero"``).
    """
    _check_fallback(empty_fallback)
    pred = np.asarray(pred)
    g = np.asarray(g)
    if pred.shape != g.shape or pred.ndim != 2:
        raise InvalidArgumentError(f"expected two equal 2-D label maps, got {pred.shape}, {g.shape}")
    a = boundary_mask(pred)
    b = boundary_mask(g)
    if not a.any() and not b.any():
        return 0.0
    if not a.any() or not b.any():
        return float(np.hypot(*g.shape)) if empty_fallback == "diagonal" else 0.0
    to_b = distance_transform_edt(~b)
    to_a = distance_transform_edt(~a)
    return 0.5 * (float(to_b[a].mean()) + float(to_a[b].mean()))


def boundary_weight(pred, g, empty_fallback: str = "diagonal") -> float:
    """``1 / (1 + d)`` for the mean boundary distance ``d``, averaged over a batch."""
    pred = np.asarray(pred)
    g = np.asarray(g)
    if pred.shape != g.shape:
        raise InvalidArgumentError(f"shape mismatch {pred.shape} vs {g.shape}")
    if g.ndim == 2:
        d = boundary_distance(pred, g, empty_fallback)
    else:
        pairs = zip(pred.reshape((-1,) + g.shape[-2:]), g.reshape((-1,) + g.shape[-2:]))
        d = float(np.mean([boundary_distance(p, t, empty_fallback) for p, t in pairs]))
    return 1.0 / (1.0 + d)


def occlusion_penalty(s, g, occ_map, palette: ClassPalette = DEFAULT_PALETTE) -> float:
    s, g = _check_pair(s, g)
    occ_map = np.asarray(occ_map, dtype=np.float64)
    if occ_map.shape != g.shape:
        raise InvalidArgumentError(f"occlusion map {occ_map.shape} does not match labels {g.shape}")
    gf = (g == palette.skin).astype(np.float64)
    return float(np.mean(occ_map * (gf - s[..., palette.skin]) ** 2))


def total_loss(s, g, palette: ClassPalette = DEFAULT_PALETTE, alpha: float = 2.0,
               weight_l: float | None = None, empty_fallback: str = "diagonal") -> LossBreakdown:
    """Compose the occlusion-aware loss.

    ``weight_l`` is derived from ``argmax(s)`` against ``g`` unless given.
    """
    return loss_and_grad(s, g, palette, alpha, weight_l, need_grad=False,
                         empty_fallback=empty_fallback)[0]


def loss_and_grad(s, g, palette: ClassPalette = DEFAULT_PALETTE, alpha: float = 2.0,
                  weight_l: float | None = None, need_grad: bool = True,
                  empty_fallback: str = "diagonal"):
    """Loss breakdown and its gradient with respect to the probabilities ``s``.

    The boundary weight is held constant during differentiation.
    """
    if alpha < 0:
        raise InvalidArgumentError("alpha must be non-negative")
    s, g = _check_pair(s, g)
    k = s.shape[-1]
    if k != len(palette):
        raise InvalidArgumentError(f"score map has {k} classes, palette has {len(palette)}")
    n = g.size
    oh = one_hot(g, k)

    p_true = np.take_along_axis(s, g[..., None], axis=-1)[..., 0]
    ce = float(-np.mean(np.log(np.maximum(p_true, LOG_CLAMP))))

    inter = np.sum(oh * s)
    denom = np.sum(oh * oh) + np.sum(s * s) + DICE_EPS
    dice = float(1.0 - 2.0 * inter / denom)

    occ = occlusion_value_map(g, palette)
    gf = (g == palette.skin).astype(np.float64)
    resid = gf - s[..., palette.skin]
    pen = float(np.mean(occ * resid ** 2))

    if weight_l is None:
        weight_l = boundary_weight(np.argmax(s, axis=-1), g, empty_fallback)
    total = weight_l * ce + (1.0 - weight_l) * dice + alpha * pen
    out = LossBreakdown(ce, dice, pen, float(weight_l), float(alpha), float(total))
    if not need_grad:
        return out, None

    grad = np.zeros_like(s)
    d_ce = np.where(p_true > LOG_CLAMP, -1.0 / (n * np.maximum(p_true, LOG_CLAMP)), 0.0)
    np.put_along_axis(grad, g[..., None], (weight_l * d_ce)[..., None], axis=-1)
    grad += (1.0 - weight_l) * (-2.0 * oh / denom + 4.0 * inter * s / denom ** 2)
    grad[..., palette.skin] += alpha * (-2.0 / n) * occ * resid
    return out, grad


def confusion_counts(pred, g, num_classes: int) -> ConfusionCounts:
    pred = np.asarray(pred).ravel()
    g = np.asarray(g).ravel()
    if pred.shape != g.shape:
        raise InvalidArgumentError("prediction and ground truth differ in size")
    for a in (pred, g):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise InvalidArgumentError(f"label index out of range for {num_classes} classes")
    hist = np.bincount(num_classes * g + pred, minlength=num_classes ** 2).reshape(num_classes, num_classes)
    tp = np.diag(hist).astype(np.int64)
    return ConfusionCounts(tp, hist.sum(axis=0) - tp, hist.sum(axis=1) - tp)


def f1_from_counts(c: ConfusionCounts) -> tuple[np.ndarray, np.ndarray]:
    """Per-class F1 and a mask of classes present in prediction or truth.

    ``2 tp / (2 tp + fp + fn)`` equals the harmonic mean of precision and
    recall, computed straight from the integer counts with one rounding.
    """
    denom = 2 * c.tp + c.fp + c.fn
    present = denom > 0
    f1 = np.zeros(len(denom), dtype=np.float64)
    f1[present] = 2 * c.tp[present] / denom[present]
    return f1, present


def f1_scores(pred, g, num_classes: int, ignore=()) -> tuple[np.ndarray, float]:
    """Per-class F1 (NaN for absent classes) and their mean over present classes."""
    f1, present = f1_from_counts(confusion_counts(pred, g, num_classes))
    per_class = np.where(present, f1, np.nan)
    keep = present.copy()
    keep[list(ignore)] = False
    mean = float(f1[keep].mean()) if keep.any() else float("nan")
    return per_class, mean


def f1_report(counts: ConfusionCounts, palette: ClassPalette = DEFAULT_PALETTE) -> dict:
    """JSON-ready F1 summary; background is excluded from every mean."""
    f1, present = f1_from_counts(counts)

    def mean_of(idx):
        vals = [f1[i] for i in idx if present[i]]
        return float(np.mean(vals)) if vals else None

    return {
        "per_class": {name: (float(f1[i]) if present[i] else None) for i, name in enumerate(palette.names)},
        "mean_face": mean_of(palette.face),
        "mean_occlusion": mean_of(palette.occlusion),
        "mean_all": mean_of(range(1, len(palette))),
        "background_in_mean": False,
    }
