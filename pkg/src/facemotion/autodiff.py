"""Minimal reverse-mode automatic differentiation over numpy arrays.

Covers exactly what the animation model needs: broadcast arithmetic,
matrix products, temporal 1-D convolution, axis reductions, and a few
pointwise nonlinearities. Every value is a float64 numpy array wrapped in
a Tensor that remembers the operation that produced it; backward() walks
the graph in reverse topological order and accumulates gradients.

A central finite-difference checker (``grad_check``) is the correctness
oracle for the whole engine.
"""

from __future__ import annotations

import numpy as np

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A new leaf holding a copy of the value, cut off from the graph."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(node) into .grad across the graph.

        Seeds with ones, so for a non-scalar output this differentiates
        the sum of its entries.
        """
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(tensor: Tensor, grad: np.ndarray):
    tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    out = _node(a.data + b.data, (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    out = _node(a.data - b.data, (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    out = _node(a.data * b.data, (a, b), backward)
    return out


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out = _node(a.data / b.data, (a, b), backward)
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")

    def backward():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    out = _node(a.data @ b.data, (a, b), backward)
    return out


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D operand")

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad.T)

    out = _node(a.data.T, (a,), backward)
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    positive = a.data > 0
    scale = np.where(positive, 1.0, slope)

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad * scale)

    out = _node(a.data * scale, (a,), backward)
    return out


def sqrt(a) -> Tensor:
    a = _wrap(a)
    root = np.sqrt(a.data)

    def backward():
        if a.requires_grad:
            # Subgradient convention: clamp the 1/sqrt blow-up at zero.
            _accumulate(a, out.grad * 0.5 / np.maximum(root, 1e-12))

    out = _node(root, (a,), backward)
    return out


def absolute(a) -> Tensor:
    a = _wrap(a)
    sign = np.sign(a.data)

    def backward():
        if a.requires_grad:
            _accumulate(a, out.grad * sign)

    out = _node(np.abs(a.data), (a,), backward)
    return out


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)

    def backward():
        if not a.requires_grad:
            return
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    out = _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)
    return out


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward():
        pieces = np.split(out.grad, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accumulate(t, piece.copy())

    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)
    return out


def narrow(a, axis: int, start: int, size: int) -> Tensor:
    """Slice ``size`` entries from ``start`` along ``axis``."""
    a = _wrap(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + size)
    index = tuple(index)

    def backward():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accumulate(a, g)

    out = _node(a.data[index].copy(), (a,), backward)
    return out


def conv1d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1):
    """Shared conv forward on raw arrays; returns (y, cols2, wmat, pad, t_out).

    x: (T, C_in); weight: (C_out, C_in, k) with k odd; bias: (C_out,).
    Output has ceil(T / stride) rows. Implemented as an im2col gather and
    one GEMM, so identical input windows produce bitwise-identical rows.
    Both the autodiff op and the inference fast path run through here.
    """
    t_in, c_in = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in_w != c_in:
        raise ValueError(f"weight expects {c_in_w} input channels, got {c_in}")
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    pad = (k - 1) // 2
    t_out = (t_in + 2 * pad - k) // stride + 1
    padded = np.zeros((t_in + 2 * pad, c_in))
    padded[pad:pad + t_in] = x
    # (t, c_in, k) layout keeps both reshapes below zero-copy views.
    cols = np.empty((t_out, c_in, k))
    for j in range(k):
        cols[:, :, j] = padded[j:j + (t_out - 1) * stride + 1:stride]
    cols2 = cols.reshape(t_out, c_in * k)
    wmat = weight.reshape(c_out, c_in * k)
    return cols2 @ wmat.T + bias, cols2, wmat, pad, t_out


def conv1d(x, weight, bias, stride: int = 1) -> Tensor:
    """Autodiff wrapper around conv1d_forward; see its contract."""
    x, weight, bias = _wrap(x), _wrap(weight), _wrap(bias)
    t_in, c_in = x.data.shape
    c_out, _, k = weight.data.shape
    y, cols2, wmat, pad, t_out = conv1d_forward(x.data, weight.data, bias.data, stride)

    def backward():
        g = out.grad  # (t_out, c_out)
        if weight.requires_grad:
            _accumulate(weight, (g.T @ cols2).reshape(c_out, c_in, k))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))
        if x.requires_grad:
            gcols = (g @ wmat).reshape(t_out, c_in, k)
            gpad = np.zeros((t_in + 2 * pad, c_in))
            for j in range(k):
                gpad[j:j + (t_out - 1) * stride + 1:stride] += gcols[:, :, j]
            _accumulate(x, gpad[pad:pad + t_in].copy())

    out = _node(y, (x, weight, bias), backward)
    return out


def grad_check(fn, tensors, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients against central finite differences.

    ``fn`` must rebuild and return a scalar Tensor from the current values
    of ``tensors`` on every call. Each coordinate's error is normalized by
    max(|analytic|, |numeric|, gradient scale), where the gradient scale is
    the largest analytic magnitude over all checked coordinates; this keeps
    near-zero coordinates from being judged against themselves. Returns the
    maximum relative error.
    """
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    output = fn()
    if output.data.size != 1:
        raise ValueError("grad_check expects a scalar-valued function")
    output.backward()
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors
    ]
    numeric = [np.zeros_like(t.data) for t in tensors]
    for t, num in zip(tensors, numeric):
        flat = t.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            upper = float(fn().data)
            flat[i] = saved - h
            lower = float(fn().data)
            flat[i] = saved
            nflat[i] = (upper - lower) / (2.0 * h)
    scale = max(1e-8, max(float(np.abs(a).max(initial=0.0)) for a in analytic))
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), scale)
        worst = max(worst, float((np.abs(a - n) / denom).max(initial=0.0)))
    return worst
