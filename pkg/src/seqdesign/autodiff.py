"""Reverse-mode automatic differentiation over numpy arrays.

Define-by-run tape: every operation on :class:`Tensor` records its parents
and a backward closure; :func:`grad` walks the graph in reverse topological
order from a scalar loss. Default precision is float64 so that gradient
checks against central finite differences hold to 1e-6; float32 can be
requested per-tensor for speed.

Higher-level layers (softmax, layer norm, GELU, cross-entropy, Gaussian
log-density) are compositions of the primitives here, so their gradients
are exact by construction.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NumericFailure(RuntimeError):
    """A non-finite value showed up where a finite one is required."""


def _as_array(x, dtype=np.float64) -> np.ndarray:
    a = np.asarray(x, dtype=dtype)
    return a


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    # sum leading axes added by broadcasting
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    """Immutable dense array node in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype or np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple["Tensor", ...],
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)
        a, b = self, other
        out_data = a.data + b.data

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.data.shape))

        return Tensor._make(out_data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accum(-g)

        return Tensor._make(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-(other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)
        a, b = self, other
        out_data = a.data * b.data

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(out_data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)
        a, b = self, other
        out_data = a.data / b.data

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._make(out_data, (a, b), backward)

    def __rtruediv__(self, other):
        return Tensor(other, dtype=self.data.dtype) / self

    def __pow__(self, exponent: float):
        a = self
        e = float(exponent)
        out_data = a.data ** e

        def backward(g):
            a._accum(g * e * a.data ** (e - 1.0))

        return Tensor._make(out_data, (a,), backward)

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other, dtype=self.data.dtype)
        a, b = self, other
        out_data = a.data @ b.data

        def backward(g):
            if a.requires_grad:
                if b.data.ndim == 1:
                    ga = np.multiply.outer(g, b.data) if a.data.ndim > 1 else g * b.data
                else:
                    ga = g @ np.swapaxes(b.data, -1, -2)
                a._accum(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                if a.data.ndim == 1:
                    gb = np.multiply.outer(a.data, g) if b.data.ndim > 1 else g * a.data
                else:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                b._accum(_unbroadcast(gb, b.data.shape))

        return Tensor._make(out_data, (a, b), backward)

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accum(g * out_data)

        return Tensor._make(out_data, (a,), backward)

    def log(self):
        a = self
        out_data = np.log(a.data)

        def backward(g):
            a._accum(g / a.data)

        return Tensor._make(out_data, (a,), backward)

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def backward(g):
            a._accum(g * (1.0 - out_data * out_data))

        return Tensor._make(out_data, (a,), backward)

    def sqrt(self):
        return self ** 0.5

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape
        out_data = a.data.reshape(shape)

        def backward(g):
            a._accum(g.reshape(old))

        return Tensor._make(out_data, (a,), backward)

    def transpose(self, *axes):
        a = self
        if not axes:
            axes = tuple(reversed(range(a.data.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        out_data = a.data.transpose(axes)

        def backward(g):
            a._accum(g.transpose(inv))

        return Tensor._make(out_data, (a,), backward)

    def swapaxes(self, ax1: int, ax2: int):
        axes = list(range(self.data.ndim))
        axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
        return self.transpose(*axes)

    def __getitem__(self, idx):
        a = self
        out_data = a.data[idx]

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accum(full)

        return Tensor._make(np.array(out_data, copy=True), (a,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                a._accum(np.broadcast_to(g, a.data.shape))
            else:
                gg = g
                if not keepdims:
                    gg = np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, a.data.shape))

        return Tensor._make(out_data, (a,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


# -- free functions ----------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return Tensor._make(out_data, tuple(tensors), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup table[ids]; ids is an integer array of any shape."""
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        table._accum(gt)

    return Tensor._make(out_data, (table,), backward)


def take_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[...] = x[..., idx[...]]; idx.shape == x.shape[:-1]."""
    idx = np.asarray(idx)
    lead = x.data.shape[:-1]
    v = x.data.shape[-1]
    if idx.shape != lead:
        raise ValueError(f"index shape {idx.shape} != leading shape {lead}")
    flat = x.data.reshape(-1, v)
    rows = np.arange(flat.shape[0])
    cols = idx.reshape(-1)
    out_data = flat[rows, cols].reshape(lead)

    def backward(g):
        gx = np.zeros_like(flat)
        np.add.at(gx, (rows, cols), g.reshape(-1))
        x._accum(gx.reshape(x.data.shape))

    return Tensor._make(out_data, (x,), backward)


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    # max-shift is treated as a constant; gradient is unaffected
    m = np.max(x.data, axis=axis, keepdims=True)
    s = (x - m).exp().sum(axis=axis, keepdims=True).log() + m
    if not keepdims:
        s = s.reshape(np.squeeze(s.data, axis=axis).shape)
    return s


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return x - logsumexp(x, axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return log_softmax(x, axis=axis).exp()


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x: Tensor) -> Tensor:
    """tanh-form GELU; differentiated exactly as written."""
    return 0.5 * x * ((x + 0.044715 * x * x * x) * _GELU_C).tanh() + 0.5 * x


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    xhat = xc * ((var + eps) ** -0.5)
    return xhat * gain + bias


def cross_entropy_logits(logits: Tensor, targets: np.ndarray,
                         mask: np.ndarray | None = None) -> Tensor:
    """Total negative log-likelihood of integer targets under logits.

    logits: [..., V]; targets: integer array matching logits.shape[:-1];
    mask (optional, same shape as targets): positions with 0 contribute
    nothing.
    """
    logp = log_softmax(logits, axis=-1)
    nll = -take_last(logp, targets)
    if mask is not None:
        nll = nll * np.asarray(mask, dtype=logits.data.dtype)
    return nll.sum()


def gaussian_log_density(x: Tensor, mean, var) -> Tensor:
    """Sum of elementwise log N(x; mean, var)."""
    mean = mean if isinstance(mean, Tensor) else Tensor(mean, dtype=x.data.dtype)
    d = x - mean
    var = float(var)
    n = x.data.size
    return -0.5 * n * np.log(2.0 * np.pi * var) - (d * d).sum() / (2.0 * var)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """1-D convolution. x: [B, Cin, L]; w: [Cout, Cin, K] -> [B, Cout, Lout]."""
    B, cin, L = x.data.shape
    cout, cin_w, K = w.data.shape
    if cin != cin_w:
        raise ValueError(f"channel mismatch: input {cin}, kernel {cin_w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    Lp = xp.shape[-1]
    Lout = (Lp - K) // stride + 1
    if Lout < 1:
        raise ValueError(f"conv1d output length < 1 (L={L}, K={K}, stride={stride})")
    out_data = np.zeros((B, cout, Lout), dtype=x.data.dtype)
    for k in range(K):
        sl = xp[:, :, k:k + stride * Lout:stride]
        out_data += np.einsum("oi,bil->bol", w.data[:, :, k], sl)
    if b is not None:
        out_data += b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[:, :, k:k + stride * Lout:stride] += np.einsum(
                    "oi,bol->bil", w.data[:, :, k], g)
            gx = gxp[:, :, padding:padding + L] if padding else gxp
            x._accum(gx)
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for k in range(K):
                sl = xp[:, :, k:k + stride * Lout:stride]
                gw[:, :, k] = np.einsum("bol,bil->oi", g, sl)
            w._accum(gw)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 2)))

    return Tensor._make(out_data, parents, backward)


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None,
                     stride: int = 1) -> Tensor:
    """Transposed 1-D convolution. x: [B, Cin, L]; w: [Cin, Cout, K]
    -> [B, Cout, (L-1)*stride + K]."""
    B, cin, L = x.data.shape
    cin_w, cout, K = w.data.shape
    if cin != cin_w:
        raise ValueError(f"channel mismatch: input {cin}, kernel {cin_w}")
    Lout = (L - 1) * stride + K
    out_data = np.zeros((B, cout, Lout), dtype=x.data.dtype)
    for k in range(K):
        out_data[:, :, k:k + stride * L:stride] += np.einsum(
            "io,bil->bol", w.data[:, :, k], x.data)
    if b is not None:
        out_data += b.data[None, :, None]

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k in range(K):
                gx += np.einsum("io,bol->bil", w.data[:, :, k],
                                g[:, :, k:k + stride * L:stride])
            x._accum(gx)
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for k in range(K):
                gw[:, :, k] = np.einsum("bil,bol->io", x.data,
                                        g[:, :, k:k + stride * L:stride])
            w._accum(gw)
        if b is not None and b.requires_grad:
            b._accum(g.sum(axis=(0, 2)))

    return Tensor._make(out_data, parents, backward)


# -- gradient driver ---------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, inputs: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients of a scalar loss w.r.t. each input tensor.

    Inputs that do not influence the loss get exact-zero gradients.
    Raises NumericFailure if the loss or any returned gradient is
    non-finite.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise NumericFailure("loss is non-finite")
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    out = []
    for t in inputs:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise NumericFailure("non-finite gradient")
        out.append(np.array(g, copy=True))
    # clear grads so graphs can be reused by value readers
    for node in order:
        node.grad = None
    return out
