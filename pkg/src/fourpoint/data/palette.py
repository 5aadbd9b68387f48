"""The 14-class face parsing palette."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidDataError

CLASS_NAMES = (
    "background",
    "skin",
    "l_brow",
    "r_brow",
    "l_eye",
    "r_eye",
    "nose",
    "u_lip",
    "l_lip",
    "inner_mouth",
    "hand_occ",
    "e_glasses",
    "sunglasses",
    "m_mask",
)

CLASS_COLORS = (
    (0, 0, 0),
    (204, 153, 120),
    (110, 60, 30),
    (140, 80, 40),
    (40, 90, 200),
    (70, 130, 230),
    (240, 200, 40),
    (210, 40, 60),
    (160, 20, 50),
    (90, 10, 30),
    (255, 140, 0),
    (0, 200, 160),
    (60, 60, 60),
    (170, 210, 255),
)


@dataclass(frozen=True)
class ClassPalette:
    names: tuple[str, ...] = CLASS_NAMES
    colors: tuple[tuple[int, int, int], ...] = CLASS_COLORS
    skin: int = 1
    occlusion: tuple[int, ...] = (10, 11, 12, 13)

    def __post_init__(self):
        if len(self.names) != len(self.colors):
            raise InvalidDataError("palette names and colors differ in length")
        if any(c >= len(self.names) for c in (self.skin, *self.occlusion)):
            raise InvalidDataError("palette role index out of range")

    def __len__(self):
        return len(self.names)

    @property
    def face(self) -> tuple[int, ...]:
        """Face-part classes: everything except background and occluders."""
        return tuple(i for i in range(1, len(self)) if i not in self.occlusion)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def validate(self, labels: np.ndarray) -> None:
        """Raise :class:`InvalidDataError` naming the first out-of-range pixel."""
        lab = np.asarray(labels)
        bad = (lab < 0) | (lab >= len(self))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise InvalidDataError(
                f"class index {int(lab[r, c])} at (row={r}, col={c}) exceeds palette size {len(self)}"
            )

    def colorize(self, labels: np.ndarray) -> np.ndarray:
        self.validate(labels)
        return np.asarray(self.colors, dtype=np.uint8)[np.asarray(labels)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": [{"index": i, "name": n, "color": list(c)}
                            for i, (n, c) in enumerate(zip(self.names, self.colors))],
                "skin": self.skin,
                "occlusion": list(self.occlusion),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ClassPalette":
        d = json.loads(text)
        classes = sorted(d["classes"], key=lambda c: c["index"])
        if [c["index"] for c in classes] != list(range(len(classes))):
            raise InvalidDataError("palette indices must be dense from 0")
        return cls(
            names=tuple(c["name"] for c in classes),
            colors=tuple(tuple(c["color"]) for c in classes),
            skin=int(d.get("skin", 1)),
            occlusion=tuple(d.get("occlusion", (10, 11, 12, 13))),
        )


DEFAULT_PALETTE = ClassPalette()
