"""Dense float64 tensors with a recorded graph and reverse-mode backward.

Elementwise ops require equal shapes, or one operand that is a scalar
(Python number or 0-d tensor).  Anything wider goes through
:func:`broadcast_to` explicitly.
"""

from __future__ import annotations

import contextlib
import numbers

import numpy as np
from scipy.special import expit

from .. import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # operator sugar
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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def _wrap(x):
    if isinstance(x, Tensor):
        return x
    if isinstance(x, numbers.Number):
        return Tensor(float(x))
    return Tensor(x)


def _make(data, parents, backward_fn):
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn)
    return Tensor(data)


def _binary_shapes(a, b, op):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape} (use broadcast_to)")


def _reduce_to(grad, shape):
    # only scalar-tensor broadcasting is allowed, so shape is () or grad.shape
    if shape == grad.shape:
        return grad
    return np.sum(grad).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a, b, "add")

    def bw(g):
        return (_reduce_to(g, a.shape) if a.requires_grad else None,
                _reduce_to(g, b.shape) if b.requires_grad else None)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a, b, "sub")

    def bw(g):
        return (_reduce_to(g, a.shape) if a.requires_grad else None,
                _reduce_to(-g, b.shape) if b.requires_grad else None)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a, b, "mul")

    def bw(g):
        return (_reduce_to(g * b.data, a.shape) if a.requires_grad else None,
                _reduce_to(g * a.data, b.shape) if b.requires_grad else None)

    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a, b, "div")
    out = a.data / b.data

    def bw(g):
        return (_reduce_to(g / b.data, a.shape) if a.requires_grad else None,
                _reduce_to(-g * out / b.data, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), bw)


def power(a, exponent):
    """``a ** exponent`` for a constant real exponent."""
    a = _wrap(a)
    p = float(exponent)
    out = a.data ** p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), bw)


def sqrt(a):
    a = _wrap(a)
    out = np.sqrt(a.data)

    def bw(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), bw)


def exp(a):
    a = _wrap(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


_LN10 = np.log(10.0)


def log10(a):
    a = _wrap(a)

    def bw(g):
        return (g / (a.data * _LN10),)

    return _make(np.log10(a.data), (a,), bw)


def sigmoid(a):
    a = _wrap(a)
    out = expit(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    a = _wrap(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(count))


def dot(a, b, axis=-1, keepdims=False):
    """Inner product along ``axis``."""
    return sum_(mul(a, b), axis=axis, keepdims=keepdims)


def matmul(a, b):
    """``a @ b`` where ``b`` is 2-D (shared weights) or matches ``a``'s batch dims."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dims {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: batch dims {a.shape} @ {b.shape}")
    k = a.shape[-1]
    if b.ndim == 2:
        # fold batch dims into one gemm
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
    else:
        out = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if b.ndim == 2:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ b.data.T).reshape(a.shape)
            if b.requires_grad:
                gb = a.data.reshape(-1, k).T @ g2
        else:
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _make(out, (a, b), bw)


def transpose(a, axes=None):
    a = _wrap(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a, shape):
    a = _wrap(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a, shape):
    """Explicit numpy-style broadcast; the gradient sums over expanded axes."""
    a = _wrap(a)
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape)
    lead = len(shape) - a.ndim
    expanded = tuple(i for i in range(len(shape))
                     if i < lead or (a.shape[i - lead] == 1 and shape[i] != 1))

    def bw(g):
        gs = np.sum(g, axis=expanded, keepdims=True) if expanded else g
        return (gs.reshape(gs.shape[lead:]) if lead else gs,)

    return _make(out, (a,), bw)


def concat(tensors, axis=0):
    ts = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(ts), bw)


def stack(tensors, axis=0):
    ts = [_wrap(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in ts]
    return concat(expanded, axis=axis)


def slice_(a, index):
    """Basic indexing (ints, slices, Ellipsis)."""
    a = _wrap(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(np.array(out), (a,), bw)


def overlap_add(frames, hop, length):
    """Overlap-add ``(..., n_frames, frame_size)`` into ``(..., length)``.

    Each output sample is divided by the number of frames covering it, so
    framing followed by overlap-add reproduces the signal.
    """
    frames = _wrap(frames)
    *lead, n_frame, frame_size = frames.shape
    inv = _inverse_counts(length, n_frame, frame_size, hop)
    flat = np.ascontiguousarray(frames.data.reshape(-1, n_frame, frame_size))
    out = kernels.overlap_add(flat, hop, length, inv).reshape(*lead, length)

    def bw(g):
        gf = kernels.overlap_add_adjoint(np.ascontiguousarray(g.reshape(-1, length)),
                                         n_frame, frame_size, hop, inv)
        return (gf.reshape(frames.shape),)

    return _make(out, (frames,), bw)


_count_cache: dict = {}


def _inverse_counts(length, n_frame, frame_size, hop):
    key = (length, n_frame, frame_size, hop)
    inv = _count_cache.get(key)
    if inv is None:
        counts = kernels.overlap_counts(length, n_frame, frame_size, hop)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
        _count_cache[key] = inv
    return inv


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring grad.

    Intermediate gradients are freed after use; leaf grads accumulate onto
    whatever is already stored (call ``zero_grad`` between steps).
    """
    if root.size != 1 or root.ndim != 0:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
