"""On-disk dataset layout.

::

    root/
      images/00000.png     RGB image
      labels/00000.png     raw class indices
      boxes.csv            index,x_min,y_min,x_max,y_max
      palette.json
"""
from __future__ import annotations

import csv
import os
from pathlib import Path

from ..errors import InvalidDataError
from ..geometry import BoundingBox
from .io import read_label, read_png, write_label, write_png
from .palette import DEFAULT_PALETTE, ClassPalette

BOX_FIELDS = ("index", "x_min", "y_min", "x_max", "y_max")


def write_dataset(root, samples, palette: ClassPalette = DEFAULT_PALETTE) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    with open(root / "boxes.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BOX_FIELDS)
        for i, (img, labels, box) in enumerate(samples):
            write_png(img, root / "images" / f"{i:05d}.png")
            write_label(labels, root / "labels" / f"{i:05d}.png", palette)
            wr.writerow([i, *(repr(float(v)) for v in box.as_tuple())])
    (root / "palette.json").write_text(palette.to_json())


def read_dataset(root):
    """Load every sample; errors name the offending file."""
    root = Path(root)
    if not root.is_dir():
        raise InvalidDataError(f"{root}: dataset directory does not exist")
    pal_path = root / "palette.json"
    try:
        palette = ClassPalette.from_json(pal_path.read_text()) if pal_path.exists() else DEFAULT_PALETTE
    except (ValueError, KeyError) as exc:
        raise InvalidDataError(f"{pal_path}: {exc}") from exc
    box_path = root / "boxes.csv"
    if not box_path.exists():
        raise InvalidDataError(f"{box_path}: missing")
    samples = []
    with open(box_path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != BOX_FIELDS:
            raise InvalidDataError(f"{box_path}: expected header {','.join(BOX_FIELDS)}")
        for line, row in enumerate(rd, start=2):
            try:
                idx = int(row["index"])
                box = BoundingBox(*(float(row[k]) for k in BOX_FIELDS[1:]))
            except (TypeError, ValueError) as exc:
                raise InvalidDataError(f"{box_path}:{line}: {exc}") from exc
            img_path = root / "images" / f"{idx:05d}.png"
            lab_path = root / "labels" / f"{idx:05d}.png"
            try:
                img = read_png(img_path)
                labels = read_label(lab_path, palette)
            except InvalidDataError as exc:
                raise InvalidDataError(f"{lab_path}: {exc}") from exc
            if img.ndim == 2:
                raise InvalidDataError(f"{img_path}: expected an RGB image")
            if img.shape[:2] != labels.shape:
                raise InvalidDataError(f"{lab_path}: size {labels.shape} differs from image {img.shape[:2]}")
            samples.append((img, labels, box))
    if not samples:
        raise InvalidDataError(f"{box_path}: no samples listed")
    return samples, palette
