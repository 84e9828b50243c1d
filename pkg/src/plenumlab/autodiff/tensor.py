"""Dense-tensor reverse-mode autodiff on numpy arrays.

Each operation returns a Tensor holding its parents and a backward closure;
calling ``backward()`` schedules the recorded nodes on a Tape (reverse
topological order, each node visited exactly once) and accumulates
gradients into the leaves.  float64 tensors are used in gradient-check
mode, float32 in training mode.
"""

import numpy as np

from .. import rng


class ShapeMismatch(ValueError):
    pass


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-dimensional value with an optional gradient record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        tape = Tape(self)
        tape.backward(seed)

    def detach(self):
        return Tensor(self.data)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


class Tape:
    """Reverse-topological schedule of the ops below a root tensor."""

    def __init__(self, root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))
        self.nodes = order  # parents precede children

    def backward(self, seed=None):
        root = self.nodes[-1]
        if seed is None:
            seed = np.ones_like(root.data)
        root.grad = np.asarray(seed, dtype=root.data.dtype)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


# ---------------------------------------------------------------------------
# elementwise algebra

def add(a, b):
    a = _as_tensor(a, None)
    b = _as_tensor(b, a.dtype)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a = _as_tensor(a, None)
    b = _as_tensor(b, a.dtype)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a, None)
    b = _as_tensor(b, a.dtype)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a = _as_tensor(a, None)
    b = _as_tensor(b, a.dtype)

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), backward)


def power(a, exponent):
    """Elementwise a**p for a scalar exponent."""
    a = _as_tensor(a, None)
    p = float(exponent)

    def backward(g):
        _accum(a, g * p * np.power(a.data, p - 1.0))

    return _make(np.power(a.data, p), (a,), backward)


def sqrt(a):
    a = _as_tensor(a, None)
    out_data = np.sqrt(a.data)

    def backward(g):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def masked_select(a, mask):
    """Gather elements of a where mask is True into a flat vector."""
    a = _as_tensor(a, None)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs value {a.shape}")
    idx = np.nonzero(mask.ravel())[0]

    def backward(g):
        full = np.zeros(a.data.size, dtype=a.data.dtype)
        full[idx] = g
        _accum(a, full.reshape(a.shape))

    return _make(a.data.ravel()[idx], (a,), backward)


# ---------------------------------------------------------------------------
# reductions and shape

def tensor_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a, None)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
        else:
            gh = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gh, a.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tensor_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a, None)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tensor_sum(a, axis, keepdims), 1.0 / n)


def reshape(a, *shape):
    a = _as_tensor(a, None)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t, None) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), backward)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    a = _as_tensor(a, None)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        _accum(a, full)

    return _make(a.data[sl].copy(), (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    a = _as_tensor(a, None)
    b = _as_tensor(b, a.dtype)

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def transpose2(a):
    """Transpose of a 2D tensor."""
    a = _as_tensor(a, None)
    if a.data.ndim != 2:
        raise ShapeMismatch("transpose2 expects a 2D tensor")

    def backward(g):
        _accum(a, g.T)

    return _make(a.data.T.copy(), (a,), backward)


def linear(x, w, b=None):
    """Affine map y = x @ w.T + b with w of shape (out, in).

    x holds row vectors: the last axis is the input feature axis.
    """
    x = _as_tensor(x, None)
    w = _as_tensor(w, x.dtype)
    if x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(f"linear: input {x.shape} vs weight {w.shape}")
    if b is not None:
        b = _as_tensor(b, x.dtype)
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"linear: bias {b.shape} vs weight {w.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    y = x2 @ w.data.T
    if b is not None:
        y = y + b.data
    y = y.reshape(x.shape[:-1] + (w.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, w.shape[0])
        _accum(x, (g2 @ w.data).reshape(x.shape))
        _accum(w, g2.T @ x2)
        if b is not None:
            _accum(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, backward)


# ---------------------------------------------------------------------------
# activations

def _sigmoid_values(x):
    # exp overflow saturates to inf and the quotient to exactly 0/1,
    # which is the correct limit; suppress the spurious warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def sigmoid(a):
    a = _as_tensor(a, None)
    s = _sigmoid_values(a.data)

    def backward(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), backward)


def tanh(a):
    a = _as_tensor(a, None)
    t = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - t * t))

    return _make(t, (a,), backward)


def silu(a):
    """x * sigmoid(x)."""
    a = _as_tensor(a, None)
    x = a.data
    s = _sigmoid_values(x)

    def backward(g):
        _accum(a, g * s * (1.0 + x * (1.0 - s)))

    return _make(x * s, (a,), backward)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """tanh-approximation GELU (fixed so metrics are bit-reproducible)."""
    a = _as_tensor(a, None)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner))

    return _make(0.5 * x * (1.0 + t), (a,), backward)


def dropout(a, p, training, seed):
    """Inverted dropout: kept units scaled by 1/(1-p) during training."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not training or p == 0.0:
        return a
    a = _as_tensor(a, None)
    gen = rng.generator(seed, "dropout")
    keep = (gen.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)

    def backward(g):
        _accum(a, g * keep)

    return _make(a.data * keep, (a,), backward)
