"""Reverse-mode automatic differentiation over dense numpy tensors.

A Tensor wraps a float32 (or float64, used by the gradient checker) numpy
array together with the closure that propagates its output gradient to its
parents. Graphs are built eagerly by the primitive functions below and
walked once, in reverse topological order, by ``backward``.

Only the primitives the tagging networks need are provided. All reductions
run in a fixed row-major order, so single-threaded execution is bitwise
deterministic. Integer inputs (token ids, class targets) and {0,1} masks are
plain numpy arrays, not Tensors: nothing differentiates through them.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyBatchError, NumericError, ShapeError
from .kernels import K

FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        if data.dtype.type not in FLOAT_DTYPES:
            raise ShapeError(f"tensor dtype must be float32/float64, got {data.dtype}")
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the graph."""
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor whose gradient buffer always exists."""

    __slots__ = ("name",)

    def __init__(self, name: str, data: np.ndarray):
        super().__init__(np.ascontiguousarray(data), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _same_dtype(*tensors: Tensor):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(f"mixed tensor dtypes {dt} and {t.data.dtype}")
    return dt


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad over the whole graph."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        # constants can sit in the graph as parents of live nodes; they have
        # no parents of their own and never receive a gradient
        if node.requires_grad and node._backward is not None:
            node._backward(node.grad)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward direction."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = bwd
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = bwd
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    out = Tensor(a.data * c, parents=(a,))

    def bwd(g):
        _accum(a, g * c)

    out._backward = bwd
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    _same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must have rank >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accum(b, _unbroadcast(gb, b.data.shape))

    out._backward = bwd
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    out._backward = bwd
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)), parents=(a,))

    def bwd(g):
        _accum(a, np.ascontiguousarray(g.transpose(inv)))

    out._backward = bwd
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    _same_dtype(*tensors)
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors)
    )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# activations and normalization


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0), parents=(a,))

    def bwd(g):
        _accum(a, g * (a.data > 0))

    out._backward = bwd
    return out


def gelu(a: Tensor) -> Tensor:
    x = np.ascontiguousarray(a.data)
    flat = x.reshape(-1)
    out = Tensor(K.gelu_fwd(flat).reshape(x.shape), parents=(a,))

    def bwd(g):
        gf = np.ascontiguousarray(g).reshape(-1)
        _accum(a, K.gelu_bwd(gf, flat).reshape(x.shape))

    out._backward = bwd
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))
    y = y.astype(x.dtype)
    out = Tensor(y, parents=(a,))

    def bwd(g):
        _accum(a, g * y * (1.0 - y))

    out._backward = bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    _same_dtype(x, gain, bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError("layer_norm gain/bias must match the last axis")
    x2 = np.ascontiguousarray(x.data).reshape(-1, d)
    y2, mean, rstd = K.layer_norm_fwd(x2, gain.data, bias.data, x.data.dtype.type(eps))
    out = Tensor(y2.reshape(x.data.shape), parents=(x, gain, bias))

    def bwd(g):
        g2 = np.ascontiguousarray(g).reshape(-1, d)
        dx, dgain, dbias = K.layer_norm_bwd(g2, x2, mean, rstd, gain.data)
        if x.requires_grad:
            _accum(x, dx.reshape(x.data.shape))
        if gain.requires_grad:
            _accum(gain, dgain)
        if bias.requires_grad:
            _accum(bias, dbias)

    out._backward = bwd
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = axis % a.data.ndim
    moved = np.ascontiguousarray(np.moveaxis(a.data, axis, -1))
    d = moved.shape[-1]
    y2 = K.softmax_fwd(moved.reshape(-1, d))
    y = np.moveaxis(y2.reshape(moved.shape), -1, axis)
    out = Tensor(np.ascontiguousarray(y), parents=(a,))

    def bwd(g):
        g2 = np.ascontiguousarray(np.moveaxis(g, axis, -1)).reshape(-1, d)
        dx = K.softmax_bwd(g2, y2).reshape(moved.shape)
        _accum(a, np.ascontiguousarray(np.moveaxis(dx, -1, axis)))

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# embedding / pooling


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (V, d) for an integer id array of any shape."""
    if table.data.ndim != 2:
        raise ShapeError("embedding table must be 2-D")
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.data.shape[0]:
        raise ShapeError("token id outside embedding table")
    out = Tensor(table.data[ids], parents=(table,))

    def bwd(g):
        flat_ids = np.ascontiguousarray(ids).reshape(-1).astype(np.int64)
        g2 = np.ascontiguousarray(g).reshape(-1, table.data.shape[1])
        _accum(table, K.embedding_grad(flat_ids, g2, table.data.shape[0]))

    out._backward = bwd
    return out


def mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Masked mean over the sequence axis: (B, L, d), (B, L) -> (B, d)."""
    if x.data.ndim != 3 or mask.shape != x.data.shape[:2]:
        raise ShapeError(f"mean_pool shapes {x.data.shape} vs {mask.shape}")
    m = mask.astype(x.data.dtype)
    denom = m.sum(axis=1)
    if np.any(denom == 0):
        raise EmptyBatchError("mean_pool over a fully-masked sequence")
    pooled = np.einsum("bld,bl->bd", x.data, m) / denom[:, None]
    out = Tensor(pooled.astype(x.data.dtype), parents=(x,))

    def bwd(g):
        _accum(x, (g / denom[:, None])[:, None, :] * m[:, :, None])

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# losses


def _check_finite(value: float, what: str) -> None:
    if not np.isfinite(value):
        raise NumericError(f"{what} is non-finite ({value})")


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean token-level cross entropy.

    ``logits`` is (..., C); ``targets`` holds class ids and ``mask`` weights
    {0,1}, both shaped like logits without the class axis.
    """
    c = logits.data.shape[-1]
    if targets.shape != logits.data.shape[:-1] or mask.shape != targets.shape:
        raise ShapeError(
            f"cross_entropy shapes: logits {logits.data.shape}, "
            f"targets {targets.shape}, mask {mask.shape}"
        )
    flat = np.ascontiguousarray(logits.data).reshape(-1, c)
    t = np.ascontiguousarray(targets).reshape(-1).astype(np.int64)
    m = np.ascontiguousarray(mask).reshape(-1).astype(logits.data.dtype)
    total = m.sum(dtype=np.float64)
    if total == 0:
        raise EmptyBatchError("cross_entropy over an empty mask")
    loss_sum, probs = K.cross_entropy_fwd(flat, t, m)
    value = loss_sum / total
    _check_finite(value, "cross_entropy")
    out = Tensor(
        np.asarray(value, dtype=logits.data.dtype), parents=(logits,)
    )

    def bwd(g):
        gscale = float(g) / total
        dflat = K.cross_entropy_bwd(probs, t, m, logits.data.dtype.type(gscale))
        _accum(logits, dflat.reshape(logits.data.shape))

    out._backward = bwd
    return out


def binary_cross_entropy(p: Tensor, target: float | np.ndarray) -> Tensor:
    """Mean BCE of probabilities against targets in {0, 1}.

    Probabilities are clipped away from 0/1 before the log, which also
    silences the gradient in the clipped region.
    """
    dt = p.data.dtype
    eps = 1e-7 if dt == np.float32 else 1e-12
    t = np.broadcast_to(np.asarray(target, dtype=dt), p.data.shape)
    if p.data.size == 0:
        raise EmptyBatchError("binary_cross_entropy over an empty batch")
    pc = np.clip(p.data, eps, 1.0 - eps)
    n = p.data.size
    value = float(-(t * np.log(pc) + (1.0 - t) * np.log1p(-pc)).sum(dtype=np.float64)) / n
    _check_finite(value, "binary_cross_entropy")
    out = Tensor(np.asarray(value, dtype=dt), parents=(p,))

    def bwd(g):
        inside = (p.data > eps) & (p.data < 1.0 - eps)
        dp = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0) * (float(g) / n)
        _accum(p, dp.astype(dt))

    out._backward = bwd
    return out


def l2_squared(a: Tensor) -> Tensor:
    value = float(np.square(a.data, dtype=np.float64).sum())
    _check_finite(value, "l2_squared")
    out = Tensor(np.asarray(value, dtype=a.data.dtype), parents=(a,))

    def bwd(g):
        _accum(a, (2.0 * float(g)) * a.data)

    out._backward = bwd
    return out


def mean_axis(a: Tensor, axis: int = 0) -> Tensor:
    n = a.data.shape[axis]
    out = Tensor(a.data.mean(axis=axis).astype(a.data.dtype), parents=(a,))

    def bwd(g):
        _accum(a, np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    out._backward = bwd
    return out
