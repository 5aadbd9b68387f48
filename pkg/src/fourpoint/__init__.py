"""Four-point Tanh-polar warping, a toy FTNet and an occlusion-aware loss for face parsing."""
from .errors import (
    InvalidArgumentError,
    InvalidCheckpointError,
    InvalidDataError,
    MalformedFileError,
    UnsupportedFormatError,
)
from .geometry import Anchor, BoundingBox, CornerId, NormMode, RoiRect, WarpMode, expand_box
from .resample import FourPointTransform, PartitionMode, four_point_restore, four_point_warp

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "BoundingBox",
    "CornerId",
    "FourPointTransform",
    "InvalidArgumentError",
    "InvalidCheckpointError",
    "InvalidDataError",
    "MalformedFileError",
    "NormMode",
    "PartitionMode",
    "RoiRect",
    "UnsupportedFormatError",
    "WarpMode",
    "expand_box",
    "four_point_restore",
    "four_point_warp",
]
