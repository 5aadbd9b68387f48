"""Four-point Block and the toy FTNet built from it."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidArgumentError
from ..resample import WarpGrid, build_tanh_cartesian_grids, grid_matrix
from .tensor import Tensor, add, conv2d, crop, mul, relu, softmax, sparse_resample, stitch2x2

FPB_RHO_MAX = 0.995


@dataclass(frozen=True)
class FpbGrids:
    """Block-level resampling operators for one sub-canvas size."""

    height: int
    width: int
    to_cartesian: sp.csr_matrix
    to_polar: sp.csr_matrix


@lru_cache(maxsize=None)
def fpb_grids(height: int, width: int, rho_max: float = FPB_RHO_MAX) -> FpbGrids:
    """Shared, immutable grids for a feature map of ``height x width`` (both even)."""
    if height % 2 or width % 2 or height <= 0 or width <= 0:
        raise InvalidArgumentError(f"FPB needs even spatial dims, got {height}x{width}")
    u, v = height // 2, width // 2
    to_cart, to_polar = build_tanh_cartesian_grids(u, v, rho_max)
    return FpbGrids(u, v, grid_matrix(to_cart, u, v), grid_matrix(to_polar, u, v))


@dataclass(frozen=True)
class FpbConfig:
    channels_in: int
    bottleneck_channels: int | None = None

    def __post_init__(self):
        if self.bottleneck_channels is None:
            object.__setattr__(self, "bottleneck_channels", max(1, self.channels_in // 2))
        if self.bottleneck_channels < 1 or self.channels_in < 1:
            raise InvalidArgumentError("FPB channel counts must be >= 1")


@dataclass(frozen=True)
class NetConfig:
    stem_channels: int = 16
    widths: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: int = 2
    num_classes: int = 14
    input_size: tuple[int, int] = (64, 64)
    in_channels: int = 3
    decoder_channels: int = 32

    def __post_init__(self):
        h, w = self.input_size
        step = 2 ** len(self.widths)
        if h % step or w % step:
            raise InvalidArgumentError(
                f"input size {self.input_size} must be divisible by 2**stages = {step}")
        if self.num_classes < 2:
            raise InvalidArgumentError("need at least two classes")

    @property
    def stages(self) -> int:
        return len(self.widths)

    def as_dict(self) -> dict:
        return {
            "stem_channels": self.stem_channels,
            "widths": list(self.widths),
            "blocks_per_stage": self.blocks_per_stage,
            "num_classes": self.num_classes,
            "input_size": list(self.input_size),
            "in_channels": self.in_channels,
            "decoder_channels": self.decoder_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        d["input_size"] = tuple(d["input_size"])
        return cls(**d)


class ParamStore(dict):
    """Ordered ``name -> Tensor`` mapping of trainable parameters."""

    def zero_grad(self):
        for t in self.values():
            t.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.items()}

    def copy(self) -> "ParamStore":
        return ParamStore((k, Tensor(t.data.copy(), requires_grad=True, name=k)) for k, t in self.items())

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.values())


def _conv_shapes(cfg: NetConfig):
    """Deterministic (name, kernel shape) list for every conv in the network."""
    shapes = [("stem", (3, 3, cfg.in_channels, cfg.stem_channels))]
    prev = cfg.stem_channels
    for s, width in enumerate(cfg.widths):
        if s > 0 or prev != width:
            stride_name = f"s{s}.down"
            shapes.append((stride_name, (3, 3, prev, width)))
        fpb = FpbConfig(width)
        cb = fpb.bottleneck_channels
        for blk in range(cfg.blocks_per_stage):
            p = f"s{s}.b{blk}"
            shapes.append((f"{p}.reduce", (1, 1, width, cb)))
            shapes.append((f"{p}.polar", (3, 3, cb, cb)))
            for q in range(4):
                shapes.append((f"{p}.cart{q}", (1, 1, cb, cb)))
            shapes.append((f"{p}.expand", (1, 1, cb, width)))
        prev = width
    dc = cfg.decoder_channels
    shapes.append(("dec.conv1", (3, 3, prev, dc)))
    shapes.append(("dec.conv2", (3, 3, dc, dc)))
    for s in range(cfg.stages - 2, -1, -1):
        shapes.append((f"dec.skip{s}", (1, 1, cfg.widths[s], dc)))
    shapes.append(("dec.cls", (1, 1, dc, cfg.num_classes)))
    return shapes


def expected_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    out = {}
    for name, shape in _conv_shapes(cfg):
        out[f"{name}.w"] = shape
        out[f"{name}.b"] = (shape[3],)
    return out


def init_params(cfg: NetConfig, seed: int = 0) -> ParamStore:
    """Glorot-uniform kernels, zero biases, drawn in a fixed order from ``seed``."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, shape in _conv_shapes(cfg):
        kh, kw, cin, cout = shape
        k = np.sqrt(6.0 / (kh * kw * cin + kh * kw * cout))
        store[f"{name}.w"] = Tensor(rng.uniform(-k, k, size=shape), requires_grad=True, name=f"{name}.w")
        store[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.b")
    return store


def _conv(x, params, name, stride=1):
    return conv2d(x, params[f"{name}.w"], params[f"{name}.b"], stride=stride)


def fpb_forward(x: Tensor, params, prefix: str, cfg: FpbConfig | None = None) -> Tensor:
    """One Four-point Block: ``x + expand(polar(z) * cartesian(z))``, ``z = relu(reduce(x))``."""
    n, h, w, c = x.shape
    if cfg is not None and c != cfg.channels_in:
        raise InvalidArgumentError(f"FPB expects {cfg.channels_in} channels, got {c}")
    if h % 2 or w % 2:
        raise InvalidArgumentError(f"FPB needs even spatial dims, got {h}x{w}")
    grids = fpb_grids(h, w)
    u, v = grids.height, grids.width
    z = relu(_conv(x, params, f"{prefix}.reduce"))
    polar = relu(_conv(z, params, f"{prefix}.polar"))
    quads = []
    for q, (rows, cols) in enumerate(
        [(slice(0, u), slice(0, v)), (slice(0, u), slice(v, w)),
         (slice(u, h), slice(0, v)), (slice(u, h), slice(v, w))]
    ):
        zq = sparse_resample(crop(z, rows, cols), grids.to_cartesian, (u, v))
        zq = relu(_conv(zq, params, f"{prefix}.cart{q}"))
        quads.append(sparse_resample(zq, grids.to_polar, (u, v)))
    cart = stitch2x2(*quads)
    return add(x, _conv(mul(polar, cart), params, f"{prefix}.expand"))


@lru_cache(maxsize=None)
def upsample_matrix(src_hw: tuple[int, int], dst_hw: tuple[int, int]) -> sp.csr_matrix:
    """Bilinear resize operator with half-pixel centers and edge replication."""
    (h, w), (oh, ow) = src_hw, dst_hw
    ys, xs = np.mgrid[0:oh, 0:ow].astype(np.float64)
    sx = (xs + 0.5) * (w / ow) - 0.5
    sy = (ys + 0.5) * (h / oh) - 0.5
    grid = WarpGrid(oh, ow, sx, sy, np.ones((oh, ow), dtype=bool))
    return grid_matrix(grid, h, w)


def upsample_bilinear(x: Tensor, size: tuple[int, int]) -> Tensor:
    if tuple(x.shape[1:3]) == tuple(size):
        return x
    return sparse_resample(x, upsample_matrix(tuple(x.shape[1:3]), tuple(size)), size)


def ftnet_forward(images, params, cfg: NetConfig) -> Tensor:
    """Per-pixel class probabilities ``(N, H, W, K)`` for a batch of warped images."""
    x = images if isinstance(images, Tensor) else Tensor(images)
    if x.data.ndim == 3:
        x = Tensor(x.data[None])
    if tuple(x.shape[1:3]) != tuple(cfg.input_size) or x.shape[3] != cfg.in_channels:
        raise InvalidArgumentError(
            f"input {x.shape[1:]} does not match configured {tuple(cfg.input_size) + (cfg.in_channels,)}")
    h = relu(_conv(x, params, "stem"))
    prev = cfg.stem_channels
    stage_out = []
    for s, width in enumerate(cfg.widths):
        if s > 0 or prev != width:
            h = relu(_conv(h, params, f"s{s}.down", stride=2 if s > 0 else 1))
        fpb = FpbConfig(width)
        for blk in range(cfg.blocks_per_stage):
            h = fpb_forward(h, params, f"s{s}.b{blk}", fpb)
        stage_out.append(h)
        prev = width
    h = relu(_conv(h, params, "dec.conv1"))
    h = relu(_conv(h, params, "dec.conv2"))
    # FCN-8-style fusion: upsample and add a 1x1 projection of each shallower stage
    for s in range(cfg.stages - 2, -1, -1):
        skip = stage_out[s]
        h = add(upsample_bilinear(h, tuple(skip.shape[1:3])), _conv(skip, params, f"dec.skip{s}"))
    h = upsample_bilinear(h, tuple(cfg.input_size))
    return softmax(_conv(h, params, "dec.cls"))
