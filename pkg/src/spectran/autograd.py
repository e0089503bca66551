"""Minimal reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray and records a backward closure per op on a tape.
Only the ops the transformer host needs are implemented. Everything is
deterministic: no threading, fixed reduction orders.
"""

from __future__ import annotations

import numpy as np

from . import dct as _dct


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (evaluation fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved


def _coerce(other, like: np.ndarray) -> "Tensor":
    """Wrap a non-Tensor operand; scalars adopt the other side's float dtype."""
    if isinstance(other, Tensor):
        return other
    if np.isscalar(other) and like.dtype.kind == "f":
        return Tensor(np.asarray(other, dtype=like.dtype))
    return Tensor(np.asarray(other))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward_fn", "_parents",
                 "_grad_owned")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self._grad_owned = False
        if _grad_enabled:
            self.requires_grad = requires_grad or any(
                p.requires_grad for p in parents)
        else:
            self.requires_grad = False
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def _backward(self):
        return self._backward_fn

    @_backward.setter
    def _backward(self, fn):
        # ops assign their backward closures unconditionally; dropping them on
        # non-grad nodes lets evaluation free intermediates as soon as each op
        # finishes instead of retaining the whole forward graph
        self._backward_fn = fn if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accumulate(self, g):
        g = _unbroadcast(np.asarray(g), self.data.shape)
        if self.grad is None:
            # store by reference; only materialize a private copy if a
            # second contribution arrives (most nodes get exactly one)
            self.grad = g if g.dtype == self.data.dtype else \
                g.astype(self.data.dtype)
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("called backward on a tensor without grad")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward without grad requires a scalar")
            grad = np.ones_like(self.data)
        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                node.grad = None  # keep grads on leaves only; bounds peak memory

    # ---- arithmetic ----

    def __add__(self, other):
        other = _coerce(other, self.data)
        out = Tensor(self.data + other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(g)
        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        other = _coerce(other, self.data)
        return self + (-other)

    def __rsub__(self, other):
        return _coerce(other, self.data) + (-self)

    def __mul__(self, other):
        other = _coerce(other, self.data)
        out = Tensor(self.data * other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * other.data)
            if other.requires_grad:
                other._accumulate(g * self.data)
        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other, self.data)
        return self * (other ** -1.0)

    def __pow__(self, p):
        assert np.isscalar(p)
        out = Tensor(self.data ** p, parents=(self,))
        out._backward = lambda g: self._accumulate(g * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = _coerce(other, self.data)
        out = Tensor(self.data @ other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                ga = g @ np.swapaxes(other.data, -1, -2)
                self._accumulate(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.swapaxes(self.data, -1, -2) @ g
                other._accumulate(_unbroadcast(gb, other.data.shape))
        out._backward = bw
        return out

    # ---- shape ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), parents=(self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def swapaxes(self, a, b):
        out = Tensor(np.swapaxes(self.data, a, b), parents=(self,))
        out._backward = lambda g: self._accumulate(np.swapaxes(g, a, b))
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], parents=(self,))

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)
        out._backward = bw
        return out

    # ---- reductions & elementwise ----

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))

        def bw(g):
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                g = np.expand_dims(g, axes)
            self._accumulate(np.broadcast_to(g, self.data.shape))
        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e, parents=(self,))
        # close over the array, not `out`, to avoid a reference cycle
        out._backward = lambda g: self._accumulate(g * e)
        return out

    def log(self):
        out = Tensor(np.log(self.data), parents=(self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, parents=(self,))
        # close over the array, not `out`, to avoid a reference cycle
        out._backward = lambda g: self._accumulate(g * (1.0 - t ** 2))
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0), parents=(self,))
        out._backward = lambda g: self._accumulate(g * (self.data > 0))
        return out

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximation GELU (smooth, so finite-difference checks stay clean)."""
    c = np.sqrt(2.0 / np.pi)
    inner = (x.data + 0.044715 * x.data ** 3) * c
    t = np.tanh(inner)
    out = Tensor(0.5 * x.data * (1.0 + t), parents=(x,))

    def bw(g):
        dinner = c * (1.0 + 3 * 0.044715 * x.data ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * dinner
        x._accumulate(g * local)
    out._backward = bw
    return out


def softmax(x: Tensor, axis=-1) -> Tensor:
    s = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=axis, keepdims=True)
    out = Tensor(s, parents=(x,))

    def bw(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x._accumulate(s * (g - dot))
    out._backward = bw
    return out


def log_softmax(x: Tensor, axis=-1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    ls = z - lse
    out = Tensor(ls, parents=(x,))

    def bw(g):
        x._accumulate(g - np.exp(ls) * g.sum(axis=axis, keepdims=True))
    out._backward = bw
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    out._backward = bw
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= table.data.shape[0]:
        raise ValueError("token id out of range")
    out = Tensor(table.data[ids], parents=(table,))

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        table._accumulate(full)
    out._backward = bw
    return out


def add_bias(x: Tensor, bias: np.ndarray) -> Tensor:
    """Add a constant (non-differentiable) array, e.g. an attention mask."""
    out = Tensor(x.data + bias, parents=(x,))
    out._backward = lambda g: x._accumulate(g)
    return out


def spectral_filter(h: Tensor, r: float, strategy: str = _dct.HIGH_FREQUENCY_CUT,
                    plan=None, out_plan=None) -> Tensor:
    """Differentiable spectral downsampling along the time axis.

    The map is linear, so the backward pass is its transpose: DCT at the
    short length, rescale, scatter into the kept bins, inverse DCT at the
    original length.
    """
    n = h.data.shape[1]
    out_data, kept = _dct.spectral_downsample_with_bins(
        h.data, r, strategy, plan, out_plan)
    out = Tensor(out_data, parents=(h,))

    def bw(g):
        h._accumulate(_dct.spectral_upsample_adjoint(g, kept, n, out_plan, plan))
    out._backward = bw
    return out


def upsample_nearest(h: Tensor, target_len: int) -> Tensor:
    """Nearest-neighbor upsampling along time: position n copies floor(n*M/N)."""
    m = h.data.shape[1]
    if target_len < m:
        raise ValueError(f"target length {target_len} shorter than input {m}")
    idx = (np.arange(target_len) * m) // target_len
    out = Tensor(h.data[:, idx, :], parents=(h,))

    def bw(g):
        full = np.zeros_like(h.data)
        np.add.at(full, (slice(None), idx, slice(None)), g)
        h._accumulate(full)
    out._backward = bw
    return out
