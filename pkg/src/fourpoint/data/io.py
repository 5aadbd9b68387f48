"""PNG reading and writing for images and raw-index label maps."""
from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import MalformedFileError, UnsupportedFormatError
from .palette import DEFAULT_PALETTE, ClassPalette


def _open(path) -> Image.Image:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        im = Image.open(path)
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedFileError(f"{path}: cannot decode PNG ({exc})") from exc
    if im.format != "PNG":
        raise UnsupportedFormatError(f"{path}: expected PNG, got {im.format}")
    return im


def read_png(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as floats in [0, 1].

    Grayscale files give an ``(H, W)`` array, RGB files ``(H, W, 3)``.
    """
    im = _open(path)
    if im.mode not in ("L", "RGB"):
        raise UnsupportedFormatError(f"{path}: unsupported PNG mode {im.mode!r} (need 8-bit L or RGB)")
    return np.asarray(im, dtype=np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(img: np.ndarray, path) -> None:
    a = np.asarray(img)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise UnsupportedFormatError(f"cannot write array of shape {a.shape} as PNG")
    Image.fromarray(to_uint8(a)).save(path, format="PNG")


def read_label(path, palette: ClassPalette = DEFAULT_PALETTE) -> np.ndarray:
    im = _open(path)
    if im.mode not in ("L", "P"):
        raise UnsupportedFormatError(f"{path}: label maps must be single-channel 8-bit, got {im.mode!r}")
    labels = np.asarray(im, dtype=np.uint8).astype(np.int64)
    palette.validate(labels)
    return labels


def write_label(labels: np.ndarray, path, palette: ClassPalette = DEFAULT_PALETTE,
                color_path=None) -> None:
    """Write raw class indices; optionally also a colorized companion PNG."""
    lab = np.asarray(labels)
    palette.validate(lab)
    Image.fromarray(lab.astype(np.uint8)).save(path, format="PNG")
    if color_path is not None:
        Image.fromarray(palette.colorize(lab)).save(color_path, format="PNG")
