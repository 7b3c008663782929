"""Dense tensors with reverse-mode automatic differentiation.

Image batches are NCHW, row-major. float32 is the training default;
float64 exists for gradient checking, where finite-difference tolerances
are unreachable in single precision.

Tensors are immutable once produced by an op (optimizers mutate leaf
``.data`` in place between graph builds, which is the one sanctioned
exception). Gradients accumulate into ``.grad`` across ``backward`` calls
until ``zero_grad``. Every op checks its output for NaN/Inf and raises
``NumericError`` instead of propagating silently.

There is no implicit broadcasting: elementwise ops demand equal shapes,
and the only built-in broadcast is a bias vector over the channel axis of
``conv2d`` / ``conv_transpose2d`` / ``linear``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    LabelError,
    NumericError,
)

DEFAULT_DTYPE = np.float32
_FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))

# keeps the log terms of bce finite when a sigmoid saturates
PROB_CLAMP = 1e-7


def _as_float_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in _FLOAT_TYPES:
        return arr.astype(DEFAULT_DTYPE)
    return arr


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_float_array(data, dtype)
        if not np.isfinite(self.data).all():
            raise NumericError("tensor created with non-finite values")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fn = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping ------------------------------------------

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A graph-free view of the same data."""
        return Tensor(self.data)

    def backward(self):
        backward(self)

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)


def _make(data, parents, grad_fn, op):
    """Wrap an op result, wiring the graph only where gradients can flow."""
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out._parents = ()
        out._grad_fn = None
    return out


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss):
    """Populate ``.grad`` of every reachable leaf that requires a gradient.

    Visits each graph node exactly once, in reverse topological order.
    Repeated calls without ``zero_grad`` accumulate (documented contract).
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    # iterative postorder DFS: producers land before their consumers
    topo, seen, stack = [], set(), [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p._grad_fn is not None and id(p) not in seen:
                stack.append((p, False))
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._grad_fn is None:  # the loss itself is a leaf
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, contrib in zip(node._parents, node._grad_fn(g)):
            if contrib is None or not parent.requires_grad:
                continue
            if parent._grad_fn is None:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += contrib
            else:
                key = id(parent)
                pending[key] = contrib if key not in pending else pending[key] + contrib


# ---------------------------------------------------------------------
# elementwise / reduction ops
# ---------------------------------------------------------------------


def add(a, b):
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ, {a.shape} vs {b.shape}")
    def grad_fn(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)
    return _make(a.data + b.data, (a, b), grad_fn, "add")


def mul(a, b):
    """Elementwise product of equal shapes, or tensor times python scalar."""
    a = _t(a)
    if isinstance(b, (int, float)):
        s = float(b)
        def grad_fn(g):
            return (g * s,)
        return _make(a.data * s, (a,), grad_fn, "mul")
    b = _t(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes differ, {a.shape} vs {b.shape}")
    def grad_fn(g):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)
    return _make(a.data * b.data, (a, b), grad_fn, "mul")


def tsum(a):
    a = _t(a)
    def grad_fn(g):
        return (np.full_like(a.data, 1.0) * g,)
    return _make(np.asarray(a.data.sum(), dtype=a.dtype), (a,), grad_fn, "sum")


def tmean(a):
    a = _t(a)
    n = a.size
    def grad_fn(g):
        return (np.full_like(a.data, 1.0 / n) * g,)
    return _make(np.asarray(a.data.mean(), dtype=a.dtype), (a,), grad_fn, "mean")


def reshape(a, shape):
    a = _t(a)
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    def grad_fn(g):
        return (g.reshape(a.shape),)
    return _make(a.data.reshape(shape), (a,), grad_fn, "reshape")


def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    def grad_fn(g):
        da = g @ b.data.T if a.requires_grad else None
        db = a.data.T @ g if b.requires_grad else None
        return (da, db)
    return _make(a.data @ b.data, (a, b), grad_fn, "matmul")


def linear(x, w, b=None):
    """x @ w + b with x of shape (N, K), w (K, M), bias (M,) over columns."""
    x, w = _t(x), _t(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    out = x.data @ w.data
    parents = [x, w]
    if b is not None:
        b = _t(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias {b.shape} does not match out features {w.shape[1]}")
        out = out + b.data
        parents.append(b)
    def grad_fn(g):
        dx = g @ w.data.T if x.requires_grad else None
        dw = x.data.T @ g if w.requires_grad else None
        if b is None:
            return (dx, dw)
        db = g.sum(axis=0) if b.requires_grad else None
        return (dx, dw, db)
    return _make(out, parents, grad_fn, "linear")


# ---------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------


def _conv_out_dim(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(xp, kh, kw, stride, oh, ow):
    """Patch matrix of a padded NCHW array: (N, OH*OW, C*KH*KW)."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    win = as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
    )
    return win.transpose(0, 4, 5, 1, 2, 3).reshape(n, oh * ow, c * kh * kw)


def _col2im(cols, padded_shape, kh, kw, stride, oh, ow):
    """Adjoint of _im2col: scatter-add patches back onto the padded canvas."""
    n, c, _, _ = padded_shape
    out = np.zeros(padded_shape, dtype=cols.dtype)
    c6 = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for ky in range(kh):
        for kx in range(kw):
            out[:, :, ky:ky + stride * oh:stride, kx:kx + stride * ow:stride] += c6[:, :, ky, kx]
    return out


def _pad_nchw(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x, w, b=None, stride=1, pad=0):
    """2-D cross-correlation, NCHW input against OIHW weights, zero padding."""
    x, w = _t(x), _t(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: need 4-D input/weight, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise DimensionError(f"conv2d: input channel axis is {c} but weight in-channel axis is {ci}")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"conv2d: stride must be >= 1 and pad >= 0, got {stride}, {pad}")
    oh, ow = _conv_out_dim(h, kh, stride, pad), _conv_out_dim(wd, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ConfigurationError(
            f"conv2d: non-positive output size {oh}x{ow} for input {h}x{wd}, kernel {kh}x{kw}, stride {stride}, pad {pad}")
    xp = _pad_nchw(x.data, pad)
    col = _im2col(xp, kh, kw, stride, oh, ow)          # (N, OHW, CKK)
    wmat = w.data.reshape(o, -1)
    out = col @ wmat.T                                  # (N, OHW, O)
    out = out.transpose(0, 2, 1).reshape(n, o, oh, ow)
    parents = [x, w]
    if b is not None:
        b = _t(b)
        if b.shape != (o,):
            raise DimensionError(f"conv2d: bias {b.shape} does not match out channels {o}")
        out = out + b.data[None, :, None, None]
        parents.append(b)
    def grad_fn(g):
        gm = g.reshape(n, o, oh * ow).transpose(0, 2, 1)  # (N, OHW, O)
        dx = None
        if x.requires_grad:
            dcol = gm @ wmat
            dxp = _col2im(dcol, xp.shape, kh, kw, stride, oh, ow)
            dx = dxp if pad == 0 else dxp[:, :, pad:pad + h, pad:pad + wd]
        dw = None
        if w.requires_grad:
            dw = np.tensordot(gm, col, axes=([0, 1], [0, 1])).reshape(w.shape)
        if b is None:
            return (dx, dw)
        db = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return (dx, dw, db)
    return _make(out, parents, grad_fn, "conv2d")


def conv_transpose2d(x, w, b=None, stride=1, pad=0):
    """Transposed convolution, the adjoint of conv2d; weights are IOHW."""
    x, w = _t(x), _t(w)
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv_transpose2d: need 4-D input/weight, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    ci, o, kh, kw = w.shape
    if ci != c:
        raise DimensionError(
            f"conv_transpose2d: input channel axis is {c} but weight in-channel axis is {ci}")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"conv_transpose2d: stride must be >= 1 and pad >= 0, got {stride}, {pad}")
    oh = (h - 1) * stride - 2 * pad + kh
    ow = (wd - 1) * stride - 2 * pad + kw
    if oh < 1 or ow < 1:
        raise ConfigurationError(
            f"conv_transpose2d: non-positive output size {oh}x{ow} for input {h}x{wd}, kernel {kh}x{kw}, stride {stride}, pad {pad}")
    wmat = w.data.reshape(c, -1)                         # (C, O*KH*KW)
    xm = x.data.reshape(n, c, h * wd).transpose(0, 2, 1)  # (N, HW, C)
    cols = xm @ wmat                                     # (N, HW, OKK)
    padded = _col2im(cols, (n, o, oh + 2 * pad, ow + 2 * pad), kh, kw, stride, h, wd)
    out = padded if pad == 0 else padded[:, :, pad:pad + oh, pad:pad + ow]
    parents = [x, w]
    if b is not None:
        b = _t(b)
        if b.shape != (o,):
            raise DimensionError(f"conv_transpose2d: bias {b.shape} does not match out channels {o}")
        out = out + b.data[None, :, None, None]
        parents.append(b)
    def grad_fn(g):
        gp = _pad_nchw(g, pad)
        gcol = _im2col(gp, kh, kw, stride, h, wd)        # (N, HW, O*KH*KW)
        dx = None
        if x.requires_grad:
            dx = (gcol @ wmat.T).transpose(0, 2, 1).reshape(n, c, h, wd)
        dw = None
        if w.requires_grad:
            dw = np.tensordot(xm, gcol, axes=([0, 1], [0, 1])).reshape(w.shape)
        if b is None:
            return (dx, dw)
        db = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return (dx, dw, db)
    return _make(out, parents, grad_fn, "conv_transpose2d")


# ---------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------


class RunningStats:
    """Per-channel exponential moving averages kept by batchnorm."""

    def __init__(self, channels, dtype=DEFAULT_DTYPE):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def reset(self):
        self.mean[:] = 0.0
        self.var[:] = 1.0


def batchnorm2d(x, gamma, beta, stats, mode="train", momentum=0.1, eps=1e-5):
    """Per-channel normalization over N*H*W with train/eval statistics."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d: need NCHW input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm2d: gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}")
    if eps <= 0:
        raise ConfigurationError("batchnorm2d: eps must be positive")
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"batchnorm2d: unknown mode {mode!r}")
    axes = (0, 2, 3)
    if mode == "train":
        n_stat = x.shape[0] * x.shape[2] * x.shape[3]
        if n_stat < 2:
            raise DegenerateInputError(
                "batchnorm2d: train mode needs more than one value per channel to estimate variance")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        stats.mean[:] = (1.0 - momentum) * stats.mean + momentum * mu
        stats.var[:] = (1.0 - momentum) * stats.var + momentum * var
    else:
        mu = stats.mean.astype(x.dtype)
        var = stats.var.astype(x.dtype)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * istd[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    def grad_fn(g):
        dgamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        dbeta = g.sum(axis=axes) if beta.requires_grad else None
        dx = None
        if x.requires_grad:
            gi = gamma.data[None, :, None, None] * istd[None, :, None, None]
            if mode == "train":
                g_mean = g.mean(axis=axes, keepdims=True)
                gx_mean = (g * xhat).mean(axis=axes, keepdims=True)
                dx = gi * (g - g_mean - xhat * gx_mean)
            else:
                dx = gi * g
        return (dx, dgamma, dbeta)
    return _make(out, (x, gamma, beta), grad_fn, "batchnorm2d")


# ---------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------


def _sigmoid_stable(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation(x, kind, slope=0.2):
    """Elementwise nonlinearity: relu | leaky_relu | tanh | sigmoid.

    relu takes subgradient 0 at the kink; leaky_relu uses the slope branch
    there.
    """
    x = _t(x)
    if kind == "relu":
        out = np.maximum(x.data, 0)
        def grad_fn(g):
            return (g * (x.data > 0),)
    elif kind == "leaky_relu":
        if not (0.0 < slope < 1.0):
            raise ConfigurationError(f"leaky_relu slope must lie in (0, 1), got {slope}")
        out = np.where(x.data > 0, x.data, np.asarray(slope, x.dtype) * x.data)
        def grad_fn(g):
            return (g * np.where(x.data > 0, np.asarray(1.0, x.dtype), np.asarray(slope, x.dtype)),)
    elif kind == "tanh":
        out = np.tanh(x.data)
        def grad_fn(g):
            return (g * (1.0 - out * out),)
    elif kind == "sigmoid":
        out = _sigmoid_stable(x.data)
        def grad_fn(g):
            return (g * out * (1.0 - out),)
    else:
        raise ConfigurationError(f"unknown activation kind {kind!r}")
    return _make(out, (x,), grad_fn, kind)


def relu(x):
    return activation(x, "relu")


def leaky_relu(x, slope=0.2):
    return activation(x, "leaky_relu", slope)


def tanh(x):
    return activation(x, "tanh")


def sigmoid(x):
    return activation(x, "sigmoid")


# ---------------------------------------------------------------------
# pooling / resizing
# ---------------------------------------------------------------------


def avg_pool2(x):
    """2x2 mean pooling; spatial dims must be even."""
    x = _t(x)
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2: need NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2: spatial dims must be even, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    def grad_fn(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * np.asarray(0.25, x.dtype),)
    return _make(out, (x,), grad_fn, "avg_pool2")


def global_avg(x):
    """Mean over H and W; returns (N, C)."""
    x = _t(x)
    if x.ndim != 4:
        raise DimensionError(f"global_avg: need NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))
    def grad_fn(g):
        return (np.broadcast_to(g[:, :, None, None], x.shape) * np.asarray(1.0 / (h * w), x.dtype),)
    return _make(out, (x,), grad_fn, "global_avg")


def nearest_upsample2(x):
    """Doubles H and W by replicating values."""
    x = _t(x)
    if x.ndim != 4:
        raise DimensionError(f"nearest_upsample2: need NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    def grad_fn(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)
    return _make(out, (x,), grad_fn, "nearest_upsample2")


def pool_and_resize(x, kind):
    if kind == "avg_pool2":
        return avg_pool2(x)
    if kind == "global_avg":
        return global_avg(x)
    if kind == "nearest_upsample2":
        return nearest_upsample2(x)
    raise ConfigurationError(f"unknown pool/resize kind {kind!r}")


# ---------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------


def bce(pred, target):
    """Mean binary cross-entropy with probabilities clamped away from 0/1."""
    pred = _t(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise DimensionError(f"bce: target {t.shape} does not match prediction {pred.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise LabelError("bce: targets must be 0 or 1")
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    p = np.clip(pred.data, lo, hi)
    n = pred.size
    out = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean()
    def grad_fn(g):
        inside = (pred.data > lo) & (pred.data < hi)
        dp = (-t / p + (1.0 - t) / (1.0 - p)) * inside / n
        return (dp * g,)
    return _make(np.asarray(out, dtype=pred.dtype), (pred,), grad_fn, "bce")


def softmax_xent(logits, labels):
    """Mean cross-entropy of logits (N, K) against integer class labels (N,)."""
    logits = _t(logits)
    if logits.ndim != 2:
        raise DimensionError(f"softmax_xent: need (N, K) logits, got {logits.shape}")
    y = np.asarray(labels)
    n, k = logits.shape
    if y.shape != (n,):
        raise DimensionError(f"softmax_xent: need ({n},) labels, got {y.shape}")
    if y.min() < 0 or y.max() >= k:
        raise LabelError(f"softmax_xent: label outside [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = -logp[np.arange(n), y].mean()
    p = np.exp(logp)
    def grad_fn(g):
        d = p.copy()
        d[np.arange(n), y] -= 1.0
        return (d / n * g,)
    return _make(np.asarray(out, dtype=logits.dtype), (logits,), grad_fn, "softmax_xent")


def l2(a, b):
    """Mean squared difference."""
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise DimensionError(f"l2: shapes differ, {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = a.size
    out = np.asarray((diff * diff).mean(), dtype=a.dtype)
    def grad_fn(g):
        base = 2.0 / n * diff * g
        return (base if a.requires_grad else None, -base if b.requires_grad else None)
    return _make(out, (a, b), grad_fn, "l2")


def losses(pred, target, kind):
    if kind == "bce":
        return bce(pred, target)
    if kind == "softmax_xent":
        return softmax_xent(pred, target)
    if kind == "l2":
        return l2(pred, target)
    raise ConfigurationError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------


def grad_check(network, loss_fn, eps=1e-5, max_entries_per_param=16, seed=0):
    """Max relative error between analytic and central-difference gradients.

    Samples up to ``max_entries_per_param`` coordinates of every parameter
    tensor. ``loss_fn(network)`` must rebuild the same scalar loss on every
    call (fixed data, fixed mode). Relative error is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.

    Finite differences are genuinely wrong when a perturbation crosses a
    relu-style kink; keep pre-activations at least ``eps`` away from zero
    when tight tolerances matter.
    """
    if not (1e-6 <= eps <= 1e-4):
        raise ConfigurationError(f"grad_check: eps must lie in [1e-6, 1e-4], got {eps}")
    params = network.parameters()
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ContractError(f"grad_check needs a float64 network; {name} is {p.dtype.name}")
    network.zero_grad()
    loss = loss_fn(network)
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: loss is non-finite")
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        if flat.size <= max_entries_per_param:
            idxs = np.arange(flat.size)
        else:
            idxs = rng.choice(flat.size, size=max_entries_per_param, replace=False)
        ana_flat = analytic[name].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(loss_fn(network).data)
            flat[i] = orig - eps
            lm = float(loss_fn(network).data)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(ana_flat[i] - numeric) / max(abs(ana_flat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    network.zero_grad()
    return max_rel
