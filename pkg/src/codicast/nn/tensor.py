"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar loss walks the graph in reverse topological
order and accumulates gradients into every tensor that requires them.
Shapes follow the data layout used throughout the package: images are
[B, H, W, C], sequences are [B, S, F].
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient over axes that were broadcast in the forward pass."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, parents: Sequence["Tensor"] = (),
                 backward: Callable[[Array], tuple] | None = None,
                 requires_grad: bool = False):
        self.data = np.asarray(data)
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)
        self.grad: Array | None = None

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``grad`` across the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # -- arithmetic ----------------------------------------------------
    # Python-number operands stay weak scalars so float32 graphs are not
    # silently promoted to float64.

    def __add__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return Tensor(a.data + other, (a,), lambda g: (g,))
        a, b = self, as_tensor(other)
        return Tensor(a.data + b.data, (a, b),
                      lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return Tensor(a.data - other, (a,), lambda g: (g,))
        a, b = self, as_tensor(other)
        return Tensor(a.data - b.data, (a, b),
                      lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return Tensor(other - a.data, (a,), lambda g: (-g,))
        return as_tensor(other).__sub__(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return Tensor(a.data * other, (a,), lambda g: (g * other,))
        a, b = self, as_tensor(other)
        return Tensor(a.data * b.data, (a, b),
                      lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                 _unbroadcast(g * a.data, b.data.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self.__mul__(1.0 / other)
        a, b = self, as_tensor(other)
        return Tensor(a.data / b.data, (a, b),
                      lambda g: (_unbroadcast(g / b.data, a.data.shape),
                                 _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))

    def __rtruediv__(self, other):
        if isinstance(other, (int, float)):
            a = self
            out = other / a.data
            return Tensor(out, (a,), lambda g: (-g * out / a.data,))
        return as_tensor(other).__truediv__(self)

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p: float):
        a = self
        return Tensor(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))

    def __matmul__(self, other):
        a, b = self, as_tensor(other)
        out = a.data @ b.data

        def back(g):
            ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
            gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
            return ga, gb

        return Tensor(out, (a, b), back)

    # -- shape ops -----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))

    def transpose(self, axes: tuple[int, ...]):
        a = self
        inverse = tuple(np.argsort(axes))
        return Tensor(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))

    @property
    def T(self):
        return self.transpose((1, 0))

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, a.data.shape).copy(),)
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g, a.data.shape).copy(),)

        return Tensor(out, (a,), back)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.data.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def constant(x, dtype=None) -> Tensor:
    """A graph leaf that never receives gradients."""
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else np.asarray(x))


# -- elementwise nonlinearities -----------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor(out, (a,), lambda g: (g * (0.5 / out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def swish(a: Tensor) -> Tensor:
    """x * sigmoid(x) as a single fused node."""
    sig = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(a.data * sig, (a,), lambda g: (g * (sig * (1.0 + a.data * (1.0 - sig))),))


def group_norm_nd(x: Tensor, scale: Tensor, shift: Tensor, groups: int, eps: float) -> Tensor:
    """Group normalization over [B, ..., C] with channels last, as one
    fused node; statistics are per (batch, group) over all other axes."""
    shape = x.data.shape
    b, c = shape[0], shape[-1]
    if c % groups:
        raise ShapeError(f"channel count {c} not divisible by {groups} groups")
    xg = x.data.reshape(b, -1, groups, c // groups)
    red = (1, 3)
    mean = xg.mean(axis=red, keepdims=True)
    var = xg.var(axis=red, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = (xg - mean) * inv_std
    yflat = y.reshape(shape)
    out = yflat * scale.data + shift.data

    def back(g):
        dy = (g * scale.data).reshape(xg.shape)
        m1 = dy.mean(axis=red, keepdims=True)
        m2 = (dy * y).mean(axis=red, keepdims=True)
        gx = (inv_std * (dy - m1 - y * m2)).reshape(shape)
        sum_axes = tuple(range(len(shape) - 1))
        return gx, (g * yflat).sum(axis=sum_axes), g.sum(axis=sum_axes)

    return Tensor(out, (x, scale, shift), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, offsets, axis=axis))

    return Tensor(out, ts, back)


# -- spatial primitives (layout [B, H, W, C]) ----------------------------


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    lo = total // 2
    return lo, total - lo


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Same-padded cross-correlation.

    x: [B, H, W, Cin], w: [kh, kw, Cin, Cout], b: [Cout].  Even kernels pad
    on the high side only, so spatial dims are preserved at stride 1.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input/weights, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[-1] != w.data.shape[2]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.data.shape[-1]}, weights expect {w.data.shape[2]}")
    bt, h, wd, cin = x.data.shape
    kh, kw, _, cout = w.data.shape
    ph_lo, ph_hi = _same_pad(h, kh, stride)
    pw_lo, pw_hi = _same_pad(wd, kw, stride)
    xp = np.pad(x.data, ((0, 0), (ph_lo, ph_hi), (pw_lo, pw_hi), (0, 0)))
    ho = -(-h // stride)
    wo = -(-wd // stride)

    cols = np.empty((bt, ho, wo, kh * kw * cin), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + (ho - 1) * stride + 1:stride, j:j + (wo - 1) * stride + 1:stride, :]
            cols[..., (i * kw + j) * cin:(i * kw + j + 1) * cin] = patch
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = cols.reshape(-1, kh * kw * cin) @ wmat
    out = out.reshape(bt, ho, wo, cout)
    if b is not None:
        out = out + b.data

    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gflat = g.reshape(-1, cout)
        gw = (cols.reshape(-1, kh * kw * cin).T @ gflat).reshape(w.data.shape)
        gcols = (gflat @ wmat.T).reshape(bt, ho, wo, kh * kw * cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + (ho - 1) * stride + 1:stride,
                    j:j + (wo - 1) * stride + 1:stride, :] += \
                    gcols[..., (i * kw + j) * cin:(i * kw + j + 1) * cin]
        gx = gxp[:, ph_lo:ph_lo + h, pw_lo:pw_lo + wd, :]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2))

    return Tensor(out, parents, back)


def max_pool(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; requires even spatial dims."""
    bt, h, w, c = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool needs even spatial dims, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = x.data.reshape(bt, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(bt, ho, wo, c, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = gw.reshape(bt, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(bt, h, w, c)
        return (gx,)

    return Tensor(out, (x,), back)


def upsample_nearest(x: Tensor) -> Tensor:
    """Double both spatial dims by nearest-neighbour repetition."""
    bt, h, w, c = x.data.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def back(g):
        return (g.reshape(bt, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return Tensor(out, (x,), back)
