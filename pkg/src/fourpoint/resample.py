"""Bilinear resampling through four-point warp grids.

Images are ``(H, W)`` or ``(H, W, C)`` float arrays, score maps are
``(H, W, K)`` and label maps are ``(H, W)`` integer arrays.  Pixel ``(row, col)``
has its center at ``x = col, y = row``.

The warped canvas is a 2x2 stitch of one Tanh-polar chart per corner of the RoI.
Inside each ``U x V`` sub-canvas rows index the angle and columns the
squashed radius::

    theta = -pi + 2*pi*(row + 0.5) / U
    rho   = rho_max * (col + 0.5) / V

All resampling is pull-based and linear, so each direction is materialized
once as a sparse matrix and reused for every channel.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, MalformedFileError
from .geometry import (
    Anchor,
    CornerId,
    NormMode,
    RoiRect,
    WarpMode,
    corner_point,
    forward_map,
    inverse_map,
    min_denominator,
)

GRID_MAGIC = b"FPWG"
GRID_VERSION = 1


class Border(str, enum.Enum):
    ZERO = "zero"
    REPLICATE = "replicate"


class PartitionMode(str, enum.Enum):
    FULL = "full"
    QUADRANT = "quadrant"


@dataclass(frozen=True, eq=False)
class WarpGrid:
    """Per-destination-pixel source coordinates for one warp direction.

    Invalid cells hold NaN coordinates and are never sampled.  When
    ``periodic_rows`` is set the source is treated as wrapping vertically
    (used for the angular axis of a Tanh-polar chart).
    """

    out_height: int
    out_width: int
    src_x: np.ndarray
    src_y: np.ndarray
    valid: np.ndarray
    periodic_rows: bool = False

    def __post_init__(self):
        shape = (self.out_height, self.out_width)
        for name in ("src_x", "src_y", "valid"):
            if getattr(self, name).shape != shape:
                raise InvalidArgumentError(f"{name} must have shape {shape}")
            getattr(self, name).flags.writeable = False

    def matrix(self, src_height: int, src_width: int) -> sp.csr_matrix:
        """Sparse ``(out_h*out_w, src_h*src_w)`` bilinear operator (replicate border)."""
        return grid_matrix(self, src_height, src_width)


def _as_hwc(img: np.ndarray) -> tuple[np.ndarray, bool]:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a[:, :, None], True
    if a.ndim != 3:
        raise InvalidArgumentError(f"expected (H, W) or (H, W, C) array, got shape {a.shape}")
    return a, False


def bilinear_taps(x, y, height, width, border=Border.REPLICATE, periodic_rows=False):
    """Flat source indices and weights of the four bilinear taps.

    Returns ``(idx, wts)`` each of shape ``(4, N)``.  Taps that fall outside
    the image under the zero border get weight 0 (and a harmless index 0).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    border = Border(border)
    if border is Border.REPLICATE:
        x = np.clip(x, 0.0, width - 1)
        if not periodic_rows:
            y = np.clip(y, 0.0, height - 1)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xs = np.stack([x0, x0 + 1, x0, x0 + 1])
    ys = np.stack([y0, y0, y0 + 1, y0 + 1])
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
    if periodic_rows:
        ys = np.mod(ys, height)
    if border is Border.REPLICATE:
        xs = np.minimum(xs, width - 1)
        ys = np.minimum(ys, height - 1)
    else:
        inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
        wts = np.where(inside, wts, 0.0)
        xs = np.where(inside, xs, 0)
        ys = np.where(inside, ys, 0)
    return ys * width + xs, wts


def bilinear_sample(img, x, y, border=Border.ZERO):
    """Sample ``img`` at continuous coordinates; returns ``(..., C)`` values."""
    a, squeeze = _as_hwc(img)
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InvalidArgumentError("sample coordinates must be finite")
    xa, ya = np.broadcast_arrays(xa, ya)
    h, w, c = a.shape
    idx, wts = bilinear_taps(xa, ya, h, w, border)
    flat = a.reshape(h * w, c)
    out = np.einsum("kn,knc->nc", wts, flat[idx])
    out = out.reshape(xa.shape + (c,))
    return out[..., 0] if squeeze else out


def grid_matrix(grid: WarpGrid, src_height: int, src_width: int) -> sp.csr_matrix:
    n_out = grid.out_height * grid.out_width
    valid = grid.valid.ravel()
    rows = np.flatnonzero(valid)
    idx, wts = bilinear_taps(
        grid.src_x.ravel()[rows],
        grid.src_y.ravel()[rows],
        src_height,
        src_width,
        Border.REPLICATE,
        grid.periodic_rows,
    )
    m = sp.csr_matrix(
        (wts.ravel(), (np.tile(rows, 4), idx.ravel())),
        shape=(n_out, src_height * src_width),
    )
    m.sum_duplicates()
    return m


def apply_matrix(m: sp.spmatrix, img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    a, squeeze = _as_hwc(img)
    h, w, c = a.shape
    if m.shape[1] != h * w:
        raise InvalidArgumentError(f"operator expects {m.shape[1]} source pixels, got {h * w}")
    out = (m @ a.reshape(h * w, c)).reshape(out_shape + (c,))
    return out[..., 0] if squeeze else out


def radial_extent(src_size, r: RoiRect, mode: WarpMode) -> float:
    """Shared ``rho_max``: the chart radius reaching the farthest image corner."""
    h, w = src_size
    img_corners = [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)]
    r_max = max(
        math.hypot(ix - cx, iy - cy)
        for cx, cy in (corner_point(r, q, mode.anchor) for q in CornerId)
        for ix, iy in img_corners
    )
    return math.tanh(r_max / min_denominator(r, mode))


def _chart_cells(u_size: int, v_size: int, rho_max: float):
    rows, cols = np.mgrid[0:u_size, 0:v_size].astype(np.float64)
    theta = -np.pi + 2.0 * np.pi * (rows + 0.5) / u_size
    rho = rho_max * (cols + 0.5) / v_size
    return theta, rho


def _chart_position(theta, rho, u_size: int, v_size: int, rho_max: float):
    row = (theta + np.pi) / (2.0 * np.pi) * u_size - 0.5
    col = rho / rho_max * v_size - 0.5
    return row, col


def _source_mask(x, y, src_size, r: RoiRect, q: CornerId, mode: WarpMode, partition):
    h, w = src_size
    ok = (x >= -0.5) & (x <= w - 0.5) & (y >= -0.5) & (y <= h - 0.5)
    box = r.box
    if mode.roi_only:
        ok &= (x >= box.x_min) & (x <= box.x_max) & (y >= box.y_min) & (y <= box.y_max)
    if PartitionMode(partition) is PartitionMode.QUADRANT:
        cx, cy = box.center
        left = q in (CornerId.TOP_LEFT, CornerId.BOTTOM_LEFT)
        top = q in (CornerId.TOP_LEFT, CornerId.TOP_RIGHT)
        ok &= (x < cx) if left else (x >= cx)
        ok &= (y < cy) if top else (y >= cy)
    return ok


def _check_sizes(src_size, out_size):
    sh, sw = (int(v) for v in src_size)
    oh, ow = (int(v) for v in out_size)
    if sh <= 0 or sw <= 0:
        raise InvalidArgumentError(f"source size must be positive, got {src_size}")
    if oh <= 0 or ow <= 0:
        raise InvalidArgumentError(f"output size must be positive, got {out_size}")
    if oh % 2 or ow % 2:
        raise InvalidArgumentError(f"output size must be even in both dimensions, got {out_size}")
    return (sh, sw), (oh, ow)


def build_four_point_grid(
    src_size,
    out_size,
    r: RoiRect,
    mode: WarpMode = WarpMode(),
    partition_mode=PartitionMode.FULL,
) -> dict[CornerId, WarpGrid]:
    """One ``out/2``-sized pull grid per corner, sampling the source image."""
    src_size, (oh, ow) = _check_sizes(src_size, out_size)
    u_size, v_size = oh // 2, ow // 2
    rho_max = radial_extent(src_size, r, mode)
    theta, rho = _chart_cells(u_size, v_size, rho_max)
    grids = {}
    for q in CornerId:
        x, y = inverse_map((theta, rho), r, q, mode)
        ok = _source_mask(x, y, src_size, r, q, mode, partition_mode)
        grids[q] = WarpGrid(
            u_size, v_size, np.where(ok, x, np.nan), np.where(ok, y, np.nan), ok
        )
    return grids


def stitch_grids(grids: dict[CornerId, WarpGrid]) -> WarpGrid:
    """Combine per-corner grids into one grid over the 2x2 canvas."""
    u_size = grids[CornerId.TOP_LEFT].out_height
    v_size = grids[CornerId.TOP_LEFT].out_width
    sx = np.empty((2 * u_size, 2 * v_size))
    sy = np.empty_like(sx)
    ok = np.empty(sx.shape, dtype=bool)
    for q, g in grids.items():
        qr, qc = q.quadrant
        sl = (slice(qr * u_size, (qr + 1) * u_size), slice(qc * v_size, (qc + 1) * v_size))
        sx[sl], sy[sl], ok[sl] = g.src_x, g.src_y, g.valid
    return WarpGrid(2 * u_size, 2 * v_size, sx, sy, ok)


class FourPointTransform:
    """Precomputed forward and inverse four-point resampling for one geometry.

    >>> from fourpoint.geometry import BoundingBox, expand_box
    >>> t = FourPointTransform((64, 64), (32, 32), expand_box(BoundingBox(16, 16, 48, 48), 1.5))
    >>> t.warp(np.full((64, 64), 0.5)).shape
    (32, 32)
    """

    def __init__(self, src_size, out_size, r: RoiRect, mode: WarpMode = WarpMode(),
                 partition_mode=PartitionMode.FULL):
        self.src_size, self.out_size = _check_sizes(src_size, out_size)
        self.roi = r
        self.mode = mode
        self.partition_mode = PartitionMode(partition_mode)
        self.rho_max = radial_extent(self.src_size, r, mode)
        self.grids = build_four_point_grid(self.src_size, self.out_size, r, mode, partition_mode)

    @cached_property
    def grid(self) -> WarpGrid:
        return stitch_grids(self.grids)

    @cached_property
    def warp_matrix(self) -> sp.csr_matrix:
        return grid_matrix(self.grid, *self.src_size)

    @cached_property
    def _restore(self) -> tuple[sp.csr_matrix, np.ndarray]:
        h, w = self.src_size
        oh, ow = self.out_size
        u_size, v_size = oh // 2, ow // 2
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        xs, ys = xs.ravel(), ys.ravel()
        n = h * w
        valid = self.grid.valid
        rows, cols, vals, counts = [], [], [], np.zeros(n)
        per_chart = []
        for q in CornerId:
            theta, rho = forward_map((xs, ys), self.roi, q, self.mode)
            row, col = _chart_position(theta, rho, u_size, v_size, self.rho_max)
            inside = rho < self.rho_max
            idx, wts = bilinear_taps(col, row, u_size, v_size, Border.REPLICATE, periodic_rows=True)
            qr, qc = q.quadrant
            r_sub, c_sub = np.divmod(idx, v_size)
            canvas_idx = (r_sub + qr * u_size) * ow + (c_sub + qc * v_size)
            wts = wts * valid.ravel()[canvas_idx] * inside
            mass = wts.sum(axis=0)
            contributes = mass > 1e-6
            wts = np.where(contributes, wts / np.where(contributes, mass, 1.0), 0.0)
            counts += contributes
            per_chart.append((canvas_idx, wts))
        scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
        pix = np.arange(n)
        for canvas_idx, wts in per_chart:
            rows.append(np.tile(pix, 4))
            cols.append(canvas_idx.ravel())
            vals.append((wts * scale).ravel())
        m = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, oh * ow),
        )
        m.sum_duplicates()
        m.eliminate_zeros()
        return m, (counts > 0).reshape(h, w)

    @property
    def restore_matrix(self) -> sp.csr_matrix:
        return self._restore[0]

    @property
    def coverage(self) -> np.ndarray:
        """Source pixels that received at least one chart sample on restore."""
        return self._restore[1]

    def warp(self, img: np.ndarray) -> np.ndarray:
        a = np.asarray(img)
        if a.shape[:2] != self.src_size:
            raise InvalidArgumentError(f"image size {a.shape[:2]} != grid source size {self.src_size}")
        return apply_matrix(self.warp_matrix, a, self.out_size)

    def restore(self, warped: np.ndarray) -> np.ndarray:
        a = np.asarray(warped)
        if a.shape[:2] != self.out_size:
            raise InvalidArgumentError(f"warped size {a.shape[:2]} != canvas size {self.out_size}")
        return apply_matrix(self.restore_matrix, a, self.src_size)


def four_point_warp(img, r: RoiRect, out_size=(512, 512), mode: WarpMode = WarpMode(),
                    partition_mode=PartitionMode.FULL) -> np.ndarray:
    a = np.asarray(img)
    return FourPointTransform(a.shape[:2], out_size, r, mode, partition_mode).warp(a)


def four_point_restore(warped, r: RoiRect, src_size, mode: WarpMode = WarpMode(),
                       partition_mode=PartitionMode.FULL, return_coverage=False):
    """Invert :func:`four_point_warp`, averaging the charts that cover each pixel.

    Uncovered pixels are 0; pass ``return_coverage=True`` to also get the mask.
    """
    a = np.asarray(warped)
    if a.ndim < 2 or a.shape[0] % 2 or a.shape[1] % 2:
        raise InvalidArgumentError(f"warped canvas must have even dimensions, got {a.shape[:2]}")
    t = FourPointTransform(src_size, a.shape[:2], r, mode, partition_mode)
    out = t.restore(a)
    return (out, t.coverage) if return_coverage else out


def _check_scores(scores, num_classes):
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 3:
        raise InvalidArgumentError(f"score map must be (H, W, K), got shape {s.shape}")
    if num_classes is not None and s.shape[2] != num_classes:
        raise InvalidArgumentError(f"score map has {s.shape[2]} classes, expected {num_classes}")
    return s


def one_hot(labels, num_classes: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.size and (lab.min() < 0 or lab.max() >= num_classes):
        raise InvalidArgumentError(f"label index out of range for {num_classes} classes")
    return (lab[..., None] == np.arange(num_classes)).astype(np.float64)


def warp_scores(scores, r, out_size=(512, 512), mode=WarpMode(), partition_mode=PartitionMode.FULL,
                num_classes=None, transform: FourPointTransform | None = None):
    s = _check_scores(scores, num_classes)
    t = transform or FourPointTransform(s.shape[:2], out_size, r, mode, partition_mode)
    return t.warp(s)


def restore_scores(scores, r, src_size, mode=WarpMode(), partition_mode=PartitionMode.FULL,
                   num_classes=None, transform: FourPointTransform | None = None):
    s = _check_scores(scores, num_classes)
    t = transform or FourPointTransform(src_size, s.shape[:2], r, mode, partition_mode)
    return t.restore(s)


def warp_labels(labels, num_classes: int, r, out_size=(512, 512), mode=WarpMode(),
                partition_mode=PartitionMode.FULL, transform=None) -> np.ndarray:
    """Warp a label map through one-hot scores; argmax ties go to the lowest class."""
    s = warp_scores(one_hot(labels, num_classes), r, out_size, mode, partition_mode,
                    transform=transform)
    return np.argmax(s, axis=2)


def restore_labels(labels, num_classes: int, r, src_size, mode=WarpMode(),
                   partition_mode=PartitionMode.FULL, transform=None) -> np.ndarray:
    s = restore_scores(one_hot(labels, num_classes), r, src_size, mode, partition_mode,
                       transform=transform)
    return np.argmax(s, axis=2)


def identity_grid(height: int, width: int) -> WarpGrid:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return WarpGrid(height, width, xs, ys, np.ones((height, width), dtype=bool))


def build_tanh_cartesian_grids(u_size: int, v_size: int, rho_max: float = 0.995):
    """Fixed grids between one Tanh-polar sub-canvas and its Tanh-Cartesian view.

    Coordinates are taken relative to the chart corner in units of the
    normalization radius, so the grids only depend on the sub-canvas size.
    Returns ``(to_cartesian, to_polar)``: the first pulls a Cartesian canvas
    from a polar sub-canvas, the second pulls the polar sub-canvas back.
    """
    if u_size <= 0 or v_size <= 0:
        raise InvalidArgumentError("sub-canvas size must be positive")
    if not 0.0 < rho_max < 1.0:
        raise InvalidArgumentError("rho_max must lie in (0, 1)")
    # Cartesian cell -> polar sub-canvas position
    a, b = np.mgrid[0:u_size, 0:v_size].astype(np.float64)
    u = -1.0 + 2.0 * (b + 0.5) / v_size
    v = -1.0 + 2.0 * (a + 0.5) / u_size
    di, dj = np.arctanh(u), np.arctanh(v)
    theta = np.arctan2(dj, di)
    rho = np.tanh(np.hypot(di, dj))
    row, col = _chart_position(theta, rho, u_size, v_size, rho_max)
    ok = rho < rho_max
    to_cart = WarpGrid(u_size, v_size, np.where(ok, col, np.nan), np.where(ok, row, np.nan), ok,
                       periodic_rows=True)
    # polar cell -> Cartesian canvas position
    theta, rho = _chart_cells(u_size, v_size, rho_max)
    radius = np.arctanh(rho)
    uu = np.tanh(radius * np.cos(theta))
    vv = np.tanh(radius * np.sin(theta))
    col_c = (uu + 1.0) / 2.0 * v_size - 0.5
    row_c = (vv + 1.0) / 2.0 * u_size - 0.5
    to_polar = WarpGrid(u_size, v_size, col_c, row_c, np.ones((u_size, v_size), dtype=bool))
    return to_cart, to_polar


def write_grid_dump(grid: WarpGrid, path) -> None:
    """Write ``grid`` in the ``FPWG`` binary layout.

    Layout (little-endian): magic ``FPWG``, u32 version, u32 out_height,
    u32 out_width, ``out_height*out_width`` pairs of f32 ``(src_x, src_y)`` in
    row-major order, then the validity bitmap packed LSB-first, row-major.
    """
    header = GRID_MAGIC + struct.pack("<III", GRID_VERSION, grid.out_height, grid.out_width)
    coords = np.stack([grid.src_x, grid.src_y], axis=-1).astype("<f4")
    bits = np.packbits(grid.valid.ravel(), bitorder="little")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(coords.tobytes())
        fh.write(bits.tobytes())


def read_grid_dump(path) -> WarpGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != GRID_MAGIC or len(raw) < 16:
        raise MalformedFileError(f"{path}: not an FPWG grid dump")
    version, oh, ow = struct.unpack("<III", raw[4:16])
    if version != GRID_VERSION:
        raise MalformedFileError(f"{path}: unsupported FPWG version {version}")
    n = oh * ow
    end = 16 + 8 * n
    nbits = (n + 7) // 8
    if len(raw) != end + nbits:
        raise MalformedFileError(f"{path}: truncated FPWG payload")
    coords = np.frombuffer(raw[16:end], dtype="<f4").reshape(oh, ow, 2).astype(np.float64)
    valid = np.unpackbits(np.frombuffer(raw[end:], dtype=np.uint8), count=n, bitorder="little")
    return WarpGrid(oh, ow, coords[..., 0].copy(), coords[..., 1].copy(),
                    valid.reshape(oh, ow).astype(bool))


__all__ = [
    "Anchor",
    "Border",
    "FourPointTransform",
    "NormMode",
    "PartitionMode",
    "WarpGrid",
    "bilinear_sample",
    "bilinear_taps",
    "build_four_point_grid",
    "build_tanh_cartesian_grids",
    "four_point_restore",
    "four_point_warp",
    "grid_matrix",
    "identity_grid",
    "one_hot",
    "read_grid_dump",
    "restore_labels",
    "restore_scores",
    "stitch_grids",
    "warp_labels",
    "warp_scores",
    "write_grid_dump",
]
