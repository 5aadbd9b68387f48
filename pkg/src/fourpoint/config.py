"""Flat ``key = value`` run configuration shared by every CLI command."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidArgumentError
from .geometry import Anchor, NormMode, WarpMode
from .loss_metrics import EMPTY_FALLBACKS
from .resample import PartitionMode


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    t = text.strip().lower()
    return None if t in ("", "none") else int(t)


@dataclass(frozen=True)
class RunConfig:
    warp_size: int = 512
    zoom: float = 1.5
    norm_mode: str = "constant"
    partition_mode: str = "full"
    roi_only: bool = False
    anchor: str = "box"
    alpha: float = 2.0
    base_lr: float = 0.01
    epochs: int = 1
    batch_size: int = 8
    max_iter: int | None = None
    seed: int = 0
    augment: bool = False
    empty_fallback: str = "zero"

    def __post_init__(self):
        if self.warp_size <= 0 or self.warp_size % 2:
            raise InvalidArgumentError(f"warp_size must be a positive even integer, got {self.warp_size}")
        if not self.zoom >= 1.0:
            raise InvalidArgumentError(f"zoom must be >= 1, got {self.zoom}")
        for key, enum in (("norm_mode", NormMode), ("partition_mode", PartitionMode), ("anchor", Anchor)):
            value = getattr(self, key)
            allowed = [m.value for m in enum]
            if value not in allowed:
                raise InvalidArgumentError(f"{key} must be one of {allowed}, got {value!r}")
        if self.empty_fallback not in EMPTY_FALLBACKS:
            raise InvalidArgumentError(f"empty_fallback must be one of {list(EMPTY_FALLBACKS)}")
        if self.alpha < 0:
            raise InvalidArgumentError("alpha must be non-negative")
        if not self.base_lr > 0:
            raise InvalidArgumentError("base_lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be >= 1")
        if self.max_iter is not None and self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")

    @property
    def warp_mode(self) -> WarpMode:
        return WarpMode(NormMode(self.norm_mode), self.roi_only, Anchor(self.anchor))

    @property
    def out_size(self) -> tuple[int, int]:
        return (self.warp_size, self.warp_size)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_PARSERS = {
    "warp_size": int,
    "zoom": float,
    "norm_mode": str.strip,
    "partition_mode": str.strip,
    "roi_only": _parse_bool,
    "anchor": str.strip,
    "alpha": float,
    "base_lr": float,
    "epochs": int,
    "batch_size": int,
    "max_iter": _optional_int,
    "seed": int,
    "augment": _parse_bool,
    "empty_fallback": str.strip,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}

DEFAULTS = RunConfig()


def parse_value(key: str, text: str):
    if key not in _PARSERS:
        raise InvalidArgumentError(f"unknown config key {key!r}")
    try:
        return _PARSERS[key](text)
    except ValueError as exc:
        raise InvalidArgumentError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise InvalidArgumentError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(key, value)
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"{source}:{lineno}: {exc}") from exc
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (``None`` values ignored)."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {p}: {exc.strerror}") from exc
        values.update(parse_config_text(text, str(p)))
    for key, value in (overrides or {}).items():
        if key not in _PARSERS:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)
