"""Reverse-mode automatic differentiation over numpy float64 arrays.

Graph nodes are Tensors; every op records a closure that routes the output
gradient back to its parents. backward() topologically sorts the graph and
runs the closures once each. Gradients accumulate by summation, so training
code clears them (grad = None) before each step.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, backward_fn):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(loss):
    """Populate .grad on every requires_grad node reachable from loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node)


# -- elementwise and reduction ops -------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def back(out):
        _accumulate(a, _unbroadcast(out.grad, a.data.shape))
        _accumulate(b, _unbroadcast(out.grad, b.data.shape))

    return _make(out_data, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def back(out):
        _accumulate(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(out.grad * a.data, b.data.shape))

    return _make(out_data, (a, b), back)


def power(a, exponent):
    a = as_tensor(a)
    c = float(exponent)
    out_data = a.data ** c

    def back(out):
        _accumulate(a, out.grad * c * a.data ** (c - 1.0))

    return _make(out_data, (a,), back)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    out_data = a.data @ b.data

    def back(out):
        _accumulate(a, out.grad @ b.data.T)
        _accumulate(b, a.data.T @ out.grad)

    return _make(out_data, (a, b), back)


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")

    def back(out):
        _accumulate(a, out.grad.T)

    return _make(a.data.T, (a,), back)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape

    def back(out):
        _accumulate(a, out.grad.reshape(old))

    return _make(a.data.reshape(shape), (a,), back)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(out):
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        _accumulate(a, np.broadcast_to(grad, a.data.shape).copy())

    return _make(out_data, (a,), back)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def back(out):
        _accumulate(a, out.grad * mask)

    return _make(a.data * mask, (a,), back)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def back(out):
        _accumulate(a, out.grad * s * (1.0 - s))

    return _make(s, (a,), back)


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.data)

    def back(out):
        _accumulate(a, out.grad * e)

    return _make(e, (a,), back)


def log(a):
    a = as_tensor(a)

    def back(out):
        _accumulate(a, out.grad / a.data)

    return _make(np.log(a.data), (a,), back)


def clip(a, lo, hi):
    """Clamp values; gradient passes through only where unclamped."""
    a = as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)

    def back(out):
        _accumulate(a, out.grad * mask)

    return _make(np.clip(a.data, lo, hi), (a,), back)


def mse(a, b):
    """Mean squared error between two tensors of identical shape."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError("mse operands must share a shape")
    diff = a - b
    return tmean(mul(diff, diff))


def log_softmax(logits):
    """Row-wise log-softmax for a 2-D logits tensor.

    The row max is subtracted as a constant; the derivative is unchanged by
    any constant shift, so the graph stays exact while the exp stays tame.
    """
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    centered = logits - shift
    lse = log(tsum(exp(centered), axis=1, keepdims=True))
    return centered - lse


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row logits."""
    labels = np.asarray(labels)
    onehot = np.zeros(logits.data.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = tsum(mul(log_softmax(logits), Tensor(onehot)), axis=1)
    return mul(tmean(picked), -1.0)


# -- structured ops -----------------------------------------------------------

def conv2d(x, w, b):
    """3x3 convolution, stride 1, zero padding 1.

    x: (N, C, H, W), w: (O, C, 3, 3), b: (O,). Output (N, O, H, W).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, c, h, wd = x.data.shape
    o = w.data.shape[0]
    if w.data.shape[1] != c:
        raise ValueError(f"kernel expects {w.data.shape[1]} channels, input has {c}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    out_data = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3]))
    out_data = np.ascontiguousarray(out_data.transpose(0, 3, 1, 2))
    out_data += b.data[None, :, None, None]

    def back(out):
        gy = out.grad  # (N, O, H, W)
        _accumulate(b, gy.sum(axis=(0, 2, 3)))
        gw = np.tensordot(gy, windows, axes=([0, 2, 3], [0, 2, 3]))
        _accumulate(w, gw)
        if x.requires_grad:
            gyp = np.pad(gy, ((0, 0), (0, 0), (2, 2), (2, 2)))
            gwin = np.lib.stride_tricks.sliding_window_view(gyp, (3, 3), axis=(2, 3))
            wf = w.data[:, :, ::-1, ::-1]
            gx = np.tensordot(gwin, wf, axes=([1, 4, 5], [0, 2, 3]))
            gx = gx.transpose(0, 3, 1, 2)[:, :, 1:h + 1, 1:wd + 1]
            _accumulate(x, np.ascontiguousarray(gx))

    return _make(out_data, (x, w, b), back)


def maxpool2(x):
    """2x2 max pooling, stride 2, floor semantics (odd trailing row/column
    dropped). Gradient routes to the first maximum within each window."""
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"input {h}x{w} too small for 2x2 pooling")
    v = x.data[:, :, :h2 * 2, :w2 * 2]
    blocks = v.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = blocks.argmax(axis=4)
    out_data = np.take_along_axis(blocks, idx[..., None], axis=4)[..., 0]

    def back(out):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], out.grad[..., None], axis=4)
        gv = gb.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        gx = np.zeros_like(x.data)
        gx[:, :, :h2 * 2, :w2 * 2] = gv
        _accumulate(x, gx)

    return _make(out_data, (x,), back)
