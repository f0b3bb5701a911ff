"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

Every kernel exists twice, once as a plain numpy implementation and once as
an ``@njit`` loop. The active set is chosen at import time from the
``DISFLUENCY_KERNELS`` environment variable:

    DISFLUENCY_KERNELS=numba   force the jitted kernels (error if unavailable)
    DISFLUENCY_KERNELS=numpy   force the numpy fallbacks
    unset / auto               numba when importable, numpy otherwise

Both paths are single-threaded with fixed reduction order, so each is
deterministic run-to-run; they agree with each other to float rounding, not
bit-exactly. Matrix multiplication stays on numpy/BLAS in both modes — the
wins here are the fused elementwise/reduction loops and the embedding
scatter-add, where ``np.add.at`` is notoriously slow.

2-D kernels expect C-contiguous arrays and 1-D kernels flat arrays; callers
own the layout. Kernels are dtype-generic over float32/float64 (numba
specializes lazily per signature).
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------------------
# numpy fallbacks


def _layer_norm_fwd_np(x, gain, bias, eps):
    mean = x.mean(axis=1, dtype=np.float64).astype(x.dtype)
    var = np.square(x - mean[:, None]).mean(axis=1, dtype=np.float64)
    rstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    y = (x - mean[:, None]) * rstd[:, None] * gain + bias
    return y, mean, rstd


def _layer_norm_bwd_np(dy, x, mean, rstd, gain):
    d = x.shape[1]
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0, dtype=np.float64).astype(x.dtype)
    dbias = dy.sum(axis=0, dtype=np.float64).astype(x.dtype)
    dxhat = dy * gain
    s1 = dxhat.sum(axis=1, dtype=np.float64).astype(x.dtype)
    s2 = (dxhat * xhat).sum(axis=1, dtype=np.float64).astype(x.dtype)
    dx = (dxhat - (s1[:, None] + xhat * s2[:, None]) / d) * rstd[:, None]
    return dx.astype(x.dtype), dgain, dbias


def _softmax_fwd_np(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_bwd_np(dy, y):
    dot = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - dot)


def _gelu_fwd_np(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return (0.5 * x * (1.0 + t)).astype(x.dtype)


def _gelu_bwd_np(dy, x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
    return (dy * dx).astype(x.dtype)


def _embedding_grad_np(ids, dy, n_rows):
    dw = np.zeros((n_rows, dy.shape[1]), dtype=dy.dtype)
    np.add.at(dw, ids, dy)
    return dw


def _cross_entropy_fwd_np(logits, targets, mask):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    n = logits.shape[0]
    nll = (np.log(z[:, 0]) + m[:, 0]) - logits[np.arange(n), targets]
    loss_sum = float((nll * mask).sum(dtype=np.float64))
    return loss_sum, probs


def _cross_entropy_bwd_np(probs, targets, mask, scale):
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits *= (mask * scale)[:, None]
    return dlogits.astype(probs.dtype)


def _adam_update_np(p, g, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.dtype)


_NUMPY = SimpleNamespace(
    name="numpy",
    layer_norm_fwd=_layer_norm_fwd_np,
    layer_norm_bwd=_layer_norm_bwd_np,
    softmax_fwd=_softmax_fwd_np,
    softmax_bwd=_softmax_bwd_np,
    gelu_fwd=_gelu_fwd_np,
    gelu_bwd=_gelu_bwd_np,
    embedding_grad=_embedding_grad_np,
    cross_entropy_fwd=_cross_entropy_fwd_np,
    cross_entropy_bwd=_cross_entropy_bwd_np,
    adam_update=_adam_update_np,
)

_NUMBA = None


# ---------------------------------------------------------------------------
# numba kernels


def _build_numba():
    from numba import njit

    def jit(f):
        return njit(f, cache=True, fastmath=False)

    @jit
    def layer_norm_fwd(x, gain, bias, eps):
        n, d = x.shape
        y = np.empty_like(x)
        mean = np.empty(n, dtype=x.dtype)
        rstd = np.empty(n, dtype=x.dtype)
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += x[i, j]
            mu = s / d
            sv = 0.0
            for j in range(d):
                dv = x[i, j] - mu
                sv += dv * dv
            mean[i] = mu
            rstd[i] = 1.0 / math.sqrt(sv / d + eps)
            for j in range(d):
                y[i, j] = (x[i, j] - mean[i]) * rstd[i] * gain[j] + bias[j]
        return y, mean, rstd

    @jit
    def layer_norm_bwd(dy, x, mean, rstd, gain):
        n, d = x.shape
        dx = np.empty_like(x)
        dgain64 = np.zeros(d, dtype=np.float64)
        dbias64 = np.zeros(d, dtype=np.float64)
        for i in range(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                xhat = (x[i, j] - mean[i]) * rstd[i]
                dxh = dy[i, j] * gain[j]
                s1 += dxh
                s2 += dxh * xhat
                dgain64[j] += dy[i, j] * xhat
                dbias64[j] += dy[i, j]
            for j in range(d):
                xhat = (x[i, j] - mean[i]) * rstd[i]
                dxh = dy[i, j] * gain[j]
                dx[i, j] = (dxh - (s1 + xhat * s2) / d) * rstd[i]
        dgain = np.empty_like(gain)
        dbias = np.empty_like(gain)
        for j in range(d):
            dgain[j] = dgain64[j]
            dbias[j] = dbias64[j]
        return dx, dgain, dbias

    @jit
    def softmax_fwd(x):
        n, d = x.shape
        y = np.empty_like(x)
        for i in range(n):
            m = x[i, 0]
            for j in range(1, d):
                if x[i, j] > m:
                    m = x[i, j]
            z = 0.0
            for j in range(d):
                e = math.exp(x[i, j] - m)
                y[i, j] = e
                z += e
            for j in range(d):
                y[i, j] = y[i, j] / z
        return y

    @jit
    def softmax_bwd(dy, y):
        n, d = y.shape
        dx = np.empty_like(y)
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += dy[i, j] * y[i, j]
            for j in range(d):
                dx[i, j] = y[i, j] * (dy[i, j] - dot)
        return dx

    @jit
    def gelu_fwd(x):
        y = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            t = math.tanh(_GELU_C * (v + _GELU_A * v * v * v))
            y[i] = 0.5 * v * (1.0 + t)
        return y

    @jit
    def gelu_bwd(dy, x):
        dx = np.empty_like(x)
        for i in range(x.shape[0]):
            v = x[i]
            u = _GELU_C * (v + _GELU_A * v * v * v)
            t = math.tanh(u)
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
            dx[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
        return dx

    @jit
    def embedding_grad(ids, dy, n_rows):
        n, d = dy.shape
        dw = np.zeros((n_rows, d), dtype=dy.dtype)
        for i in range(n):
            row = ids[i]
            for j in range(d):
                dw[row, j] += dy[i, j]
        return dw

    @jit
    def cross_entropy_fwd(logits, targets, mask):
        n, c = logits.shape
        probs = np.empty_like(logits)
        loss_sum = 0.0
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > m:
                    m = logits[i, j]
            z = 0.0
            for j in range(c):
                e = math.exp(logits[i, j] - m)
                probs[i, j] = e
                z += e
            for j in range(c):
                probs[i, j] = probs[i, j] / z
            loss_sum += mask[i] * ((math.log(z) + m) - logits[i, targets[i]])
        return loss_sum, probs

    @jit
    def cross_entropy_bwd(probs, targets, mask, scale):
        n, c = probs.shape
        dlogits = np.empty_like(probs)
        for i in range(n):
            w = mask[i] * scale
            for j in range(c):
                dlogits[i, j] = probs[i, j] * w
            dlogits[i, targets[i]] -= w
        return dlogits

    @jit
    def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
        bc1 = 1.0 - beta1**t
        bc2 = 1.0 - beta2**t
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            p[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)

    return SimpleNamespace(
        name="numba",
        layer_norm_fwd=layer_norm_fwd,
        layer_norm_bwd=layer_norm_bwd,
        softmax_fwd=softmax_fwd,
        softmax_bwd=softmax_bwd,
        gelu_fwd=gelu_fwd,
        gelu_bwd=gelu_bwd,
        embedding_grad=embedding_grad,
        cross_entropy_fwd=cross_entropy_fwd,
        cross_entropy_bwd=cross_entropy_bwd,
        adam_update=adam_update,
    )


def numpy_kernels() -> SimpleNamespace:
    return _NUMPY


def numba_kernels() -> SimpleNamespace:
    global _NUMBA
    if _NUMBA is None:
        _NUMBA = _build_numba()
    return _NUMBA


def _select() -> SimpleNamespace:
    choice = os.environ.get("DISFLUENCY_KERNELS", "auto").lower()
    if choice == "numpy":
        return _NUMPY
    if choice == "numba":
        return numba_kernels()
    if choice != "auto":
        raise ValueError(
            f"DISFLUENCY_KERNELS={choice!r}: expected 'numba', 'numpy' or 'auto'"
        )
    try:
        return numba_kernels()
    except ImportError:
        return _NUMPY


K = _select()
