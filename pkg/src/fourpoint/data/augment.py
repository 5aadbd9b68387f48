"""Random rotation and scaling about the image center."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import affine_transform

from ..geometry import BoundingBox

ROTATION_RANGE = (-30.0, 30.0)
SCALE_RANGE = (0.75, 1.25)


def similarity_matrix(angle_deg: float, scale: float, center) -> tuple[np.ndarray, np.ndarray]:
    """Forward map ``p -> A @ (p - c) + c`` in (x, y) coordinates."""
    t = math.radians(angle_deg)
    a = scale * np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    c = np.asarray(center, dtype=np.float64)
    return a, c - a @ c


def augment(img, labels, box: BoundingBox, seed=None, angle: float | None = None,
            scale: float | None = None):
    """Rotate and scale a sample about the image center.

    Angle (degrees) and scale are drawn uniformly from the training ranges
    unless given.  The image is resampled bilinearly and the labels by
    nearest neighbor, both with edge replication; the box becomes the
    axis-aligned hull of its transformed corners, clipped to the image.
    """
    rng = np.random.default_rng(seed)
    if angle is None:
        angle = rng.uniform(*ROTATION_RANGE)
    if scale is None:
        scale = rng.uniform(*SCALE_RANGE)
    img = np.asarray(img, dtype=np.float64)
    labels = np.asarray(labels)
    h, w = labels.shape
    a, off = similarity_matrix(angle, scale, ((w - 1) / 2.0, (h - 1) / 2.0))

    # affine_transform pulls: input = M @ output + o, in (row, col) order
    inv = np.linalg.inv(a)
    inv_off = -inv @ off
    m_rc = inv[::-1, ::-1]
    o_rc = inv_off[::-1]
    if img.ndim == 2:
        out_img = affine_transform(img, m_rc, o_rc, order=1, mode="nearest")
    else:
        out_img = np.stack([affine_transform(img[..., c], m_rc, o_rc, order=1, mode="nearest")
                            for c in range(img.shape[2])], axis=-1)
    out_lab = affine_transform(labels, m_rc, o_rc, order=0, mode="nearest")

    corners = np.array([[box.x_min, box.y_min], [box.x_max, box.y_min],
                        [box.x_min, box.y_max], [box.x_max, box.y_max]])
    moved = corners @ a.T + off
    x0, y0 = np.clip(moved.min(axis=0), 0.0, [w, h])
    x1, y1 = np.clip(moved.max(axis=0), 0.0, [w, h])
    if x1 - x0 < 1.0 or y1 - y0 < 1.0:
        # degenerate after clipping; keep the original box
        new_box = box
    else:
        new_box = BoundingBox(float(x0), float(y0), float(x1), float(y1))
    return out_img, out_lab, new_box
