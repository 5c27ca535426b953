"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every differentiable operation records a tape node holding
its input tensors and a backward rule, and ``backward`` replays the tape in
reverse topological order. Only the operations needed by the codec layers
and losses are implemented; everything runs on numpy float64 arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class GradError(RuntimeError):
    """Raised on invalid backward requests (e.g. non-scalar loss)."""


_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class TapeNode:
    """One recorded operation: parent tensors plus a backward rule.

    ``backward`` maps the gradient at the output to a tuple of gradients
    aligned with ``parents`` (``None`` for parents that need no gradient).
    """

    __slots__ = ("parents", "backward", "name")

    def __init__(self, parents, backward, name):
        self.parents = parents
        self.backward = backward
        self.name = name


class Tensor:
    """n-dimensional float64 value array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    # -- graph plumbing -----------------------------------------------------

    def _record(self, parents, backward, name):
        if _grad_enabled and any(p.requires_grad for p in parents):
            self.requires_grad = True
            self.node = TapeNode(tuple(parents), backward, name)
        return self

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"shapes not broadcast-compatible: {a.shape} vs {b.shape}"
        ) from None


# -- elementwise ops --------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = Tensor(a.data + b.data)
    return out._record(
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = Tensor(a.data - b.data)
    return out._record(
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = Tensor(a.data * b.data)
    return out._record(
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
        "mul",
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = Tensor(a.data / b.data)
    return out._record(
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def elementwise(op_kind, a, b):
    """Dispatch add/sub/mul/div by name (uniform entry point)."""
    try:
        fn = {"add": add, "sub": sub, "mul": mul, "div": div}[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op: {op_kind!r}") from None
    return fn(a, b)


def square(a):
    a = as_tensor(a)
    out = Tensor(a.data * a.data)
    return out._record((a,), lambda g: (2.0 * a.data * g,), "square")


def sqrt(a):
    a = as_tensor(a)
    root = np.sqrt(a.data)
    out = Tensor(root)
    return out._record((a,), lambda g: (g * 0.5 / root,), "sqrt")


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.data)
    out = Tensor(e)
    return out._record((a,), lambda g: (g * e,), "exp")


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    return out._record((a,), lambda g: (g / a.data,), "log")


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    return out._record((a,), lambda g: (g * (a.data > 0.0),), "relu")


def sigmoid(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    return out._record((a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def clip_min(a, lo):
    """Elementwise max(a, lo) with pass-through gradient where a > lo."""
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, lo))
    return out._record((a,), lambda g: (g * (a.data > lo),), "clip_min")


# -- reductions and reshaping ----------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    return out._record((a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for i in ax:
            n *= a.shape[i]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor(a.data.reshape(shape))
    return out._record((a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return out._record(tuple(tensors), backward, "concat")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    return out._record(
        (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul"
    )


def transpose2d(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose2d expects a 2-d tensor, got {a.shape}")
    out = Tensor(a.data.T.copy())
    return out._record((a,), lambda g: (g.T,), "transpose2d")


def softmax(a, axis=-1):
    """Numerically stabilized softmax (max subtraction as a constant)."""
    a = as_tensor(a)
    shift = sub(a, Tensor(a.data.max(axis=axis, keepdims=True)))
    e = exp(shift)
    return div(e, tsum(e, axis=axis, keepdims=True))


# -- convolution ------------------------------------------------------------

def conv_out_extent(h, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1


def _windows(x, kh, kw, stride):
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _conv2d_data(x, k, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = _windows(x, k.shape[2], k.shape[3], stride)
    return np.einsum("nchwij,ocij->nohw", win, k, optimize=True)


def _conv2d_dk_data(x, gy, stride, pad, kshape):
    # gk[o,c,i,j] = sum_{n,h,w} gy[n,o,h,w] * xpad[n,c,h*s+i,w*s+j]
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = _windows(x, kshape[2], kshape[3], stride)
    oh, ow = gy.shape[2], gy.shape[3]
    win = win[:, :, :oh, :ow]
    return np.einsum("nohw,nchwij->ocij", gy, win, optimize=True)


def _conv2d_dx_data(gy, k, stride, pad, target_hw):
    # Adjoint of _conv2d_data: zero-stuff gy by the stride, full-correlate
    # with the flipped kernel, then crop the conv padding.
    n, co, oh, ow = gy.shape
    kh, kw = k.shape[2], k.shape[3]
    up = np.zeros((n, co, (oh - 1) * stride + 1, (ow - 1) * stride + 1))
    up[:, :, ::stride, ::stride] = gy
    up = np.pad(up, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    win = sliding_window_view(up, (kh, kw), axis=(2, 3))
    full = np.einsum("nohwij,ocij->nchw", win, k[:, :, ::-1, ::-1], optimize=True)
    fh, fw = full.shape[2], full.shape[3]
    th, tw = target_hw
    # full covers padded positions [0, fh); positions past the last window
    # (possible when the stride does not divide the span) get zero gradient
    blk = full[:, :, pad : min(fh, pad + th), pad : min(fw, pad + tw)]
    out = np.zeros((n, k.shape[1], th, tw))
    out[:, :, : blk.shape[2], : blk.shape[3]] = blk
    return out


def _promote_nchw(x):
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"expected [C,H,W] or [N,C,H,W] input, got {x.shape}")


def conv2d(x, kernel, bias=None, stride=1, padding=0):
    """2-d cross-correlation; kernel [C_out, C_in, Kh, Kw]."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, squeezed = _promote_nchw(x)
    kd = kernel.data
    if kd.ndim != 4:
        raise ShapeError(f"kernel must be 4-d, got {kernel.shape}")
    if xd.shape[1] != kd.shape[1]:
        raise ShapeError(
            f"channel mismatch: input {xd.shape} vs kernel {kernel.shape}"
        )
    h, w = xd.shape[2], xd.shape[3]
    if kd.shape[2] > h + 2 * padding or kd.shape[3] > w + 2 * padding:
        raise ShapeError(
            f"kernel {kernel.shape} larger than padded input {xd.shape}"
        )
    oh = conv_out_extent(h, kd.shape[2], stride, padding)
    ow = conv_out_extent(w, kd.shape[3], stride, padding)
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"non-positive conv output extent ({oh}, {ow})")

    y = _conv2d_data(xd, kd, stride, padding)
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.size != kd.shape[0]:
            raise ShapeError(
                f"bias length {bias.size} != output channels {kd.shape[0]}"
            )
        y = y + bias.data.reshape(1, -1, 1, 1)
        parents.append(bias)
    out = Tensor(y[0] if squeezed else y)

    def backward(g):
        gy = g[None] if squeezed else g
        gx = _conv2d_dx_data(gy, kd, stride, padding, (h, w))
        gk = _conv2d_dk_data(xd, gy, stride, padding, kd.shape)
        grads = [gx[0] if squeezed else gx, gk]
        if bias is not None:
            grads.append(gy.sum(axis=(0, 2, 3)).reshape(bias.shape))
        return tuple(grads)

    return out._record(tuple(parents), backward, "conv2d")


def transpose_conv2d(x, kernel, bias=None, stride=1, padding=0):
    """Adjoint of conv2d; kernel [C_in, C_out, Kh, Kw] maps C_in -> C_out ...

    The kernel uses the conv2d layout, so ``transpose_conv2d(y, k)`` with
    ``k [Co, Ci, Kh, Kw]`` maps a Co-channel input to a Ci-channel output and
    satisfies <conv2d(x, k), y> == <x, transpose_conv2d(y, k)>.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, squeezed = _promote_nchw(x)
    kd = kernel.data
    if kd.ndim != 4:
        raise ShapeError(f"kernel must be 4-d, got {kernel.shape}")
    if xd.shape[1] != kd.shape[0]:
        raise ShapeError(
            f"channel mismatch: input {xd.shape} vs kernel {kernel.shape}"
        )
    h, w = xd.shape[2], xd.shape[3]
    oh = (h - 1) * stride - 2 * padding + kd.shape[2]
    ow = (w - 1) * stride - 2 * padding + kd.shape[3]
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"non-positive transpose conv output extent ({oh}, {ow})")

    y = _conv2d_dx_data(xd, kd, stride, padding, (oh, ow))
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.size != kd.shape[1]:
            raise ShapeError(
                f"bias length {bias.size} != output channels {kd.shape[1]}"
            )
        y = y + bias.data.reshape(1, -1, 1, 1)
        parents.append(bias)
    out = Tensor(y[0] if squeezed else y)

    def backward(g):
        gy = g[None] if squeezed else g
        gx = _conv2d_data(gy, kd, stride, padding)[:, :, : xd.shape[2], : xd.shape[3]]
        gk = _conv2d_dk_data(gy, xd, stride, padding, kd.shape)
        grads = [gx[0] if squeezed else gx, gk]
        if bias is not None:
            grads.append(gy.sum(axis=(0, 2, 3)).reshape(bias.shape))
        return tuple(grads)

    return out._record(tuple(parents), backward, "transpose_conv2d")


# -- padding ----------------------------------------------------------------

def _reflect_indices(n, before, after):
    if before >= n or after >= n:
        raise ShapeError(
            f"reflection pad ({before}, {after}) must be < extent {n}"
        )
    idx = np.arange(-before, n + after)
    period = max(2 * n - 2, 1)
    idx = np.abs(idx) % period
    return np.where(idx > n - 1, period - idx, idx)


def reflection_pad2d(x, pad):
    """Mirror-pad the last two axes; ``pad`` is (top, bottom, left, right).

    Uses the conventional edge-excluding reflection: [1,2,3] padded by one
    on each side becomes [2,1,2,3,2].
    """
    x = as_tensor(x)
    top, bottom, left, right = pad
    if x.ndim < 2:
        raise ShapeError(f"reflection_pad2d needs >= 2 axes, got {x.shape}")
    ri = _reflect_indices(x.shape[-2], top, bottom)
    ci = _reflect_indices(x.shape[-1], left, right)
    out = Tensor(x.data[..., ri[:, None], ci[None, :]])

    def backward(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, (..., ri[:, None], ci[None, :]), g)
        return (gx,)

    return out._record((x,), backward, "reflection_pad2d")


def zero_pad2d(x, pad):
    """Zero-pad the last two axes; ``pad`` is (top, bottom, left, right)."""
    x = as_tensor(x)
    top, bottom, left, right = pad
    width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    out = Tensor(np.pad(x.data, width))
    h, w = x.shape[-2], x.shape[-1]

    def backward(g):
        return (g[..., top : top + h, left : left + w],)

    return out._record((x,), backward, "zero_pad2d")


def crop2d(x, rows, cols):
    """Slice ``rows``/``cols`` (start, stop) out of the last two axes."""
    x = as_tensor(x)
    r0, r1 = rows
    c0, c1 = cols
    out = Tensor(x.data[..., r0:r1, c0:c1])

    def backward(g):
        gx = np.zeros(x.shape)
        gx[..., r0:r1, c0:c1] = g
        return (gx,)

    return out._record((x,), backward, "crop2d")


# -- backward pass ----------------------------------------------------------

def _topo_order(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                stack.append((p, False))
    return order


def _run_backward(loss):
    if loss.size != 1:
        raise GradError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    order = _topo_order(loss)
    for t in reversed(order):
        if t.node is None:
            continue
        g = grads.pop(id(t), None)
        if g is None:
            continue
        for p, pg in zip(t.node.parents, t.node.backward(g)):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
    return grads, order


def backward(loss):
    """Populate ``.grad`` on every requires-grad leaf reachable from ``loss``."""
    grads, order = _run_backward(loss)
    for t in order:
        if t.node is None and t.requires_grad and id(t) in grads:
            g = grads[id(t)]
            t.grad = g if t.grad is None else t.grad + g


def grads_wrt(loss, tensors):
    """Gradients of ``loss`` w.r.t. ``tensors`` without touching ``.grad``.

    Used for probe passes (e.g. attribution) that must not pollute the
    accumulated parameter gradients. Unreachable tensors get zeros.
    """
    hold = {id(t): t for t in tensors}
    grads = {id(loss): np.ones_like(loss.data)}
    order = _topo_order(loss)
    for t in reversed(order):
        if t.node is None:
            continue
        g = grads.get(id(t))
        if id(t) not in hold:
            grads.pop(id(t), None)
        if g is None:
            continue
        for p, pg in zip(t.node.parents, t.node.backward(g)):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
    return [grads.get(id(t), np.zeros(t.shape)) for t in tensors]
