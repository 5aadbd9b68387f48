"""Binary ``FPNT`` checkpoint container.

Layout, all integers little-endian u32 unless noted::

    b"FPNT" | version | meta_len | meta (UTF-8 JSON: network config) | count
    count x ( name_len | name (UTF-8) | ndim | dims... | dtype (u8: 4=f32, 8=f64) | data )
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import InvalidCheckpointError
from .model import NetConfig, ParamStore, expected_shapes
from .tensor import Tensor

MAGIC = b"FPNT"
VERSION = 1
_DTYPES = {4: "<f4", 8: "<f8"}


def write_checkpoint(path, params: ParamStore, net: NetConfig, dtype_bytes: int = 8,
                     extra: dict | None = None) -> None:
    """Serialize ``params``; ``extra`` is stored verbatim in the metadata under ``"run"``."""
    if dtype_bytes not in _DTYPES:
        raise ValueError("dtype_bytes must be 4 or 8")
    meta_obj = {"net": net.as_dict()}
    if extra is not None:
        meta_obj["run"] = extra
    meta = json.dumps(meta_obj, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(params))]
    for name, t in params.items():
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack(f"<I{t.data.ndim}I", t.data.ndim, *t.data.shape))
        parts.append(struct.pack("<B", dtype_bytes))
        parts.append(np.ascontiguousarray(t.data, dtype=_DTYPES[dtype_bytes]).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise InvalidCheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_checkpoint(path, return_meta: bool = False):
    """Load ``(params, net)``, plus the raw metadata dict when ``return_meta``.

    Parameter names and shapes must match what ``net`` declares.
    """
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), path)
    if rd.take(4) != MAGIC:
        raise InvalidCheckpointError(f"{path}: not an FPNT checkpoint")
    version = rd.u32()
    if version != VERSION:
        raise InvalidCheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(rd.take(rd.u32()).decode())
        net = NetConfig.from_dict(meta["net"])
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidCheckpointError(f"{path}: bad metadata ({exc})") from exc
    params = ParamStore()
    for _ in range(rd.u32()):
        name = rd.take(rd.u32()).decode()
        shape = tuple(rd.u32() for _ in range(rd.u32()))
        code = rd.take(1)[0]
        if code not in _DTYPES:
            raise InvalidCheckpointError(f"{path}: unknown dtype code {code} for {name}")
        count = int(np.prod(shape))
        data = np.frombuffer(rd.take(code * count), dtype=_DTYPES[code]).reshape(shape)
        params[name] = Tensor(data.astype(np.float64), requires_grad=True, name=name)
    if rd.pos != len(rd.raw):
        raise InvalidCheckpointError(f"{path}: trailing bytes after last record")
    want = expected_shapes(net)
    got = {k: t.data.shape for k, t in params.items()}
    if got != want:
        bad = sorted(set(got) ^ set(want)) or sorted(k for k in want if got[k] != want[k])
        raise InvalidCheckpointError(f"{path}: parameters do not match the stored network config ({bad[:3]})")
    return (params, net, meta) if return_meta else (params, net)
