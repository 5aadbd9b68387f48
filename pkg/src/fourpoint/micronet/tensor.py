"""Tape-free reverse-mode autodiff over numpy arrays.

Each op returns a :class:`Tensor` that remembers its parents and a closure
that pushes its output gradient back to them.  ``Tensor.backward`` walks the
graph in reverse topological order.  Everything runs in float64.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidArgumentError
from ..resample import WarpGrid, grid_matrix

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = np.zeros_like(self.data) if requires_grad and not parents else None
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(t):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    return a


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return Tensor(a.data + b.data, parents=(a, b), backward=lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return Tensor(a.data * b.data, parents=(a, b), backward=lambda g: (g * b.data, g * a.data))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), parents=(x,), backward=lambda g: (g * mask,))


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int | None = None) -> Tensor:
    """NHWC cross-correlation with a ``(kh, kw, cin, cout)`` kernel.

    ``pad=None`` means same padding (``k // 2``), giving ``ceil(in / stride)``
    output pixels per axis for odd kernels.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise InvalidArgumentError("conv2d expects NHWC input and (kh, kw, cin, cout) weights")
    n, h, wd, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if wcin != cin:
        raise InvalidArgumentError(f"conv2d: input has {cin} channels, kernel expects {wcin}")
    if b.shape != (cout,):
        raise InvalidArgumentError(f"conv2d: bias shape {b.shape} != ({cout},)")
    if pad is None:
        pad = kh // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise InvalidArgumentError("conv2d: kernel larger than padded input")
    out = np.broadcast_to(b.data, (n, ho, wo, cout)).copy()
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :]
            out += patch @ w.data[i, j]

    def backward(g):
        dxp = np.zeros_like(xp) if x.requires_grad else None
        dw = np.empty_like(w.data) if w.requires_grad else None
        g2 = g.reshape(-1, cout)
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(i, i + stride * (ho - 1) + 1, stride),
                      slice(j, j + stride * (wo - 1) + 1, stride), slice(None))
                if dw is not None:
                    dw[i, j] = xp[sl].reshape(-1, cin).T @ g2
                if dxp is not None:
                    dxp[sl] += g @ w.data[i, j].T
        dx = None
        if dxp is not None:
            dx = dxp[:, pad:pad + h, pad:pad + wd, :] if pad else dxp
        db = g.sum(axis=(0, 1, 2)) if b.requires_grad else None
        return dx, dw, db

    return Tensor(_check_finite(out, "conv2d"), parents=(x, w, b), backward=backward)


def sparse_resample(x: Tensor, m: sp.csr_matrix, out_hw: tuple[int, int]) -> Tensor:
    """Apply a fixed linear spatial operator to every (batch, channel) plane."""
    n, h, w, c = x.shape
    if m.shape[1] != h * w:
        raise InvalidArgumentError(f"resample: operator expects {m.shape[1]} pixels, input has {h * w}")
    oh, ow = out_hw
    flat = x.data.transpose(1, 2, 0, 3).reshape(h * w, n * c)
    out = np.asarray(m @ flat).reshape(oh, ow, n, c).transpose(2, 0, 1, 3)
    mt = m.T.tocsr()

    def backward(g):
        gf = g.transpose(1, 2, 0, 3).reshape(oh * ow, n * c)
        return (np.asarray(mt @ gf).reshape(h, w, n, c).transpose(2, 0, 1, 3),)

    return Tensor(np.ascontiguousarray(out), parents=(x,), backward=backward)


def fixed_grid_resample(x: Tensor, grid: WarpGrid) -> Tensor:
    """Bilinear pull-sampling of every plane of ``x`` through ``grid``.

    Invalid grid cells produce 0.  The operator is rebuilt on each call; hot
    paths should cache ``grid_matrix`` and use :func:`sparse_resample`.
    """
    if x.data.ndim != 4:
        raise InvalidArgumentError("fixed_grid_resample expects an NHWC tensor")
    return sparse_resample(x, grid_matrix(grid, x.shape[1], x.shape[2]), (grid.out_height, grid.out_width))


def crop(x: Tensor, rows: slice, cols: slice) -> Tensor:
    def backward(g):
        dx = np.zeros_like(x.data)
        dx[:, rows, cols, :] = g
        return (dx,)

    return Tensor(x.data[:, rows, cols, :].copy(), parents=(x,), backward=backward)


def stitch2x2(tl: Tensor, tr: Tensor, bl: Tensor, br: Tensor) -> Tensor:
    """Assemble four equally-sized NHWC tensors into one 2x2 canvas."""
    u, v = tl.shape[1:3]
    for t in (tr, bl, br):
        if t.shape != tl.shape:
            raise InvalidArgumentError("stitch2x2: quadrants differ in shape")
    top = np.concatenate([tl.data, tr.data], axis=2)
    bottom = np.concatenate([bl.data, br.data], axis=2)

    def backward(g):
        return (g[:, :u, :v], g[:, :u, v:], g[:, u:, :v], g[:, u:, v:])

    return Tensor(np.concatenate([top, bottom], axis=1), parents=(tl, tr, bl, br), backward=backward)


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return Tensor(s, parents=(x,), backward=backward)


def scalar_from(value: float, x: Tensor, grad_wrt_x: np.ndarray) -> Tensor:
    """Wrap an externally computed scalar whose gradient w.r.t. ``x`` is known."""
    return Tensor(np.asarray(value), parents=(x,), backward=lambda g: (g * grad_wrt_x,))
