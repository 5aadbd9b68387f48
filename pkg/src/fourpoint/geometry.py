"""Coordinate mathematics for the four-point Tanh-polar transform.

Every function here is pure and accepts either Python floats or numpy arrays
for point coordinates, so the same code path serves single points and whole
sampling grids.

Conventions: ``x`` grows to the right, ``y`` grows downwards (image rows),
angles are measured from the +x axis towards +y and live in ``[-pi, pi)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"non-finite bounding box {vals}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InvalidArgumentError(f"degenerate bounding box {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class RoiRect:
    """Bounding box expanded about its center by ``zoom``."""

    box: BoundingBox
    zoom: float
    source_box: BoundingBox

    @property
    def width(self) -> float:
        return self.box.width

    @property
    def height(self) -> float:
        return self.box.height


class CornerId(enum.Enum):
    TOP_LEFT = 0
    TOP_RIGHT = 1
    BOTTOM_LEFT = 2
    BOTTOM_RIGHT = 3

    @property
    def quadrant(self) -> tuple[int, int]:
        """(row, col) of this corner's sub-canvas in the stitched 2x2 layout."""
        return divmod(self.value, 2)


class NormMode(str, enum.Enum):
    CONSTANT = "constant"
    ELLIPTIC = "elliptic"


class Anchor(str, enum.Enum):
    """Which rectangle's corners serve as chart origins.

    ``BOX`` uses the original bounding box while the radial scale still comes
    from the expanded RoI, so a larger zoom spreads the face over more of each
    chart.  ``ROI`` puts the origins on the expanded rectangle itself.
    """

    BOX = "box"
    ROI = "roi"


@dataclass(frozen=True)
class WarpMode:
    norm_mode: NormMode = NormMode.CONSTANT
    roi_only: bool = False
    anchor: Anchor = Anchor.BOX

    def __post_init__(self):
        object.__setattr__(self, "norm_mode", NormMode(self.norm_mode))
        object.__setattr__(self, "anchor", Anchor(self.anchor))


class PolarCoord(NamedTuple):
    theta: float | np.ndarray
    rho: float | np.ndarray


def expand_box(b: BoundingBox, zoom: float) -> RoiRect:
    """Scale ``b`` about its center by ``zoom`` (>= 1)."""
    if not isinstance(b, BoundingBox):
        raise InvalidArgumentError("expected a BoundingBox")
    if not math.isfinite(zoom) or zoom < 1.0:
        raise InvalidArgumentError(f"zoom must be finite and >= 1, got {zoom}")
    cx, cy = b.center
    hw = 0.5 * b.width * zoom
    hh = 0.5 * b.height * zoom
    box = BoundingBox(cx - hw, cy - hh, cx + hw, cy + hh)
    return RoiRect(box=box, zoom=float(zoom), source_box=b)


def _check_dims(w, h):
    if not (math.isfinite(w) and math.isfinite(h)) or w <= 0 or h <= 0:
        raise InvalidArgumentError(f"width and height must be positive, got {w}, {h}")


def ellipse_axes(w: float, h: float) -> tuple[float, float]:
    """Semi-axes (a, b) of the equal-area ellipse for a ``w`` x ``h`` rectangle."""
    _check_dims(w, h)
    return w / (2.0 * SQRT_PI), h / (2.0 * SQRT_PI)


def normalization_radius(w: float, h: float) -> float:
    a, b = ellipse_axes(w, h)
    return math.hypot(a, b)


def elliptic_radius(theta, w: float, h: float):
    """Distance from the center to the (a, b) ellipse along direction ``theta``."""
    a, b = ellipse_axes(w, h)
    c = np.cos(theta)
    s = np.sin(theta)
    r = a * b / np.sqrt((b * c) ** 2 + (a * s) ** 2)
    return float(r) if np.ndim(r) == 0 else r


def corner_point(r: RoiRect, q: CornerId, anchor: Anchor = Anchor.BOX) -> tuple[float, float]:
    box = r.source_box if Anchor(anchor) is Anchor.BOX else r.box
    x = box.x_min if q in (CornerId.TOP_LEFT, CornerId.BOTTOM_LEFT) else box.x_max
    y = box.y_min if q in (CornerId.TOP_LEFT, CornerId.TOP_RIGHT) else box.y_max
    return (x, y)


def _denominator(theta, r: RoiRect, mode: WarpMode):
    if mode.norm_mode is NormMode.CONSTANT:
        return normalization_radius(r.width, r.height)
    return elliptic_radius(theta, r.width, r.height)


def min_denominator(r: RoiRect, mode: WarpMode) -> float:
    """Smallest radial normalizer over all directions for this mode."""
    if mode.norm_mode is NormMode.CONSTANT:
        return normalization_radius(r.width, r.height)
    return min(ellipse_axes(r.width, r.height))


def wrap_angle(theta):
    """Map angles into ``[-pi, pi)``."""
    t = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return float(t) if t.ndim == 0 else t


def forward_map(p, r: RoiRect, q: CornerId, mode: WarpMode = WarpMode()) -> PolarCoord:
    """Tanh-polar coordinates of point ``p = (x, y)`` about corner ``q`` of ``r``.

    The corner itself maps to ``(0, 0)``.
    """
    cx, cy = corner_point(r, q, mode.anchor)
    di = np.asarray(p[0], dtype=np.float64) - cx
    dj = np.asarray(p[1], dtype=np.float64) - cy
    theta = np.arctan2(dj, di)
    theta = np.where(theta >= np.pi, theta - 2.0 * np.pi, theta)
    radius = np.hypot(di, dj)
    rho = np.tanh(radius / _denominator(theta, r, mode))
    if theta.ndim == 0:
        return PolarCoord(float(theta), float(rho))
    return PolarCoord(theta, rho)


def inverse_map(c: PolarCoord, r: RoiRect, q: CornerId, mode: WarpMode = WarpMode()):
    """Point ``(x, y)`` whose Tanh-polar coordinates about ``q`` are ``c``."""
    theta = np.asarray(c[0], dtype=np.float64)
    rho = np.asarray(c[1], dtype=np.float64)
    if np.any(rho >= 1.0) or np.any(rho < 0.0) or not np.all(np.isfinite(rho)):
        raise InvalidArgumentError("rho must lie in [0, 1)")
    radius = np.arctanh(rho) * _denominator(theta, r, mode)
    cx, cy = corner_point(r, q, mode.anchor)
    x = cx + radius * np.cos(theta)
    y = cy + radius * np.sin(theta)
    if x.ndim == 0:
        return (float(x), float(y))
    return (x, y)


def tanh_cartesian_map(p, r: RoiRect, q: CornerId, anchor: Anchor = Anchor.BOX):
    """Componentwise tanh of corner-relative coordinates, scaled by the normalization radius."""
    cx, cy = corner_point(r, q, anchor)
    rn = normalization_radius(r.width, r.height)
    u = np.tanh((np.asarray(p[0], dtype=np.float64) - cx) / rn)
    v = np.tanh((np.asarray(p[1], dtype=np.float64) - cy) / rn)
    if u.ndim == 0:
        return (float(u), float(v))
    return (u, v)


def tanh_cartesian_inverse(uv, r: RoiRect, q: CornerId, anchor: Anchor = Anchor.BOX):
    u = np.asarray(uv[0], dtype=np.float64)
    v = np.asarray(uv[1], dtype=np.float64)
    if np.any(np.abs(u) >= 1.0) or np.any(np.abs(v) >= 1.0):
        raise InvalidArgumentError("Tanh-Cartesian coordinates must lie in (-1, 1)")
    cx, cy = corner_point(r, q, anchor)
    rn = normalization_radius(r.width, r.height)
    x = cx + rn * np.arctanh(u)
    y = cy + rn * np.arctanh(v)
    if x.ndim == 0:
        return (float(x), float(y))
    return (x, y)
