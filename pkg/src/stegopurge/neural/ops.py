"""Forward/backward kernels for the layer set used by the purifier networks.

Arrays are NCHW.  Every ``*_forward`` returns ``(out, cache)`` and the
matching ``*_backward`` consumes ``(dout, cache)``.  Kernels compute in the
dtype of their inputs, so the same code serves float32 training and the
float64 shadow used for gradient checks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
BCE_CLAMP = 1e-7

# above this many elements the im2col buffer is skipped in favour of a
# per-tap loop that never materialises all patches at once
_IM2COL_LIMIT = 16_000_000


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _tap(xp, i, j, stride, ho, wo):
    return xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]


def conv2d_forward(x, w, b, stride: int = 1, pad: int = 0):
    """Cross-correlation ``out[n,f] = sum_c x[n,c] * w[f,c] + b[f]``."""
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ValueError(f"conv2d: input has {c} channels, weights expect {cw}")
    if b is not None and b.shape != (f,):
        raise ValueError(f"conv2d: bias shape {b.shape} does not match {f} filters")
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    wm = w.reshape(f, c * kh * kw)
    if n * c * kh * kw * ho * wo <= _IM2COL_LIMIT:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
        out = np.matmul(wm, cols)
    else:
        cols = None
        out = np.zeros((n, f, ho * wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                xs = _tap(xp, i, j, stride, ho, wo).reshape(n, c, ho * wo)
                out += np.matmul(w[:, :, i, j], xs)
    out = out.reshape(n, f, ho, wo)
    if b is not None:
        out += b.reshape(1, f, 1, 1)
    return out, (x.shape, xp, cols, w, stride, pad)


def conv2d_backward(dout, cache):
    """Return ``(dx, dw, db)``."""
    x_shape, xp, cols, w, stride, pad = cache
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    _, _, ho, wo = dout.shape
    d2 = dout.reshape(n, f, ho * wo)
    db = dout.sum(axis=(0, 2, 3))
    if cols is not None:
        dw = np.tensordot(d2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        dcols = np.matmul(w.reshape(f, -1).T, d2).reshape(n, c, kh, kw, ho, wo)
        dxp = np.zeros(xp.shape, dtype=dout.dtype)
        for i in range(kh):
            for j in range(kw):
                _tap(dxp, i, j, stride, ho, wo)[...] += dcols[:, :, i, j]
        return _crop(dxp, pad, h, wd), dw, db
    dw = np.empty(w.shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = _tap(xp, i, j, stride, ho, wo).reshape(n, c, ho * wo)
            dw[:, :, i, j] = np.tensordot(d2, xs, axes=([0, 2], [0, 2]))
    if stride == 1:
        # input gradient = full correlation of dout with the flipped, transposed kernel
        wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dpad = np.pad(dout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        dxp, _ = conv2d_forward(dpad, wt, None, 1, 0)
        return _crop(dxp, pad, h, wd), dw, db
    dxp = np.zeros(xp.shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            _tap(dxp, i, j, stride, ho, wo)[...] += np.matmul(
                w[:, :, i, j].T, d2).reshape(n, c, ho, wo)
    return _crop(dxp, pad, h, wd), dw, db


def _crop(dxp, pad, h, wd):
    return dxp[:, :, pad:pad + h, pad:pad + wd]


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool):
    """Per-channel batch normalisation.

    In training mode the running statistics are updated in place as
    ``r = 0.9 * r + 0.1 * batch`` (biased batch variance).
    """
    if x.shape[0] == 0:
        raise ValueError("batchnorm: empty batch")
    if gamma.shape != (x.shape[1],):
        raise ValueError(f"batchnorm: {x.shape[1]} channels, gamma has shape {gamma.shape}")
    g = gamma.reshape(1, -1, 1, 1)
    bt = beta.reshape(1, -1, 1, 1)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= BN_MOMENTUM
        running_mean += (1 - BN_MOMENTUM) * mean
        running_var *= BN_MOMENTUM
        running_var += (1 - BN_MOMENTUM) * var
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + BN_EPS)).astype(x.dtype)
    xhat = (x - mean.reshape(1, -1, 1, 1).astype(x.dtype)) * inv_std.reshape(1, -1, 1, 1)
    return g * xhat + bt, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    """Return ``(dx, dgamma, dbeta)``."""
    xhat, inv_std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(1, -1, 1, 1)
    s = inv_std.reshape(1, -1, 1, 1)
    if not train:
        return dxhat * s, dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    sum_d = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dx = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = s / m * (m * dxhat - sum_d - xhat * sum_dx)
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def leaky_relu_forward(x, slope: float = 0.2):
    mask = x > 0
    return np.where(mask, x, x * slope), (mask, slope)


def leaky_relu_backward(dout, cache):
    mask, slope = cache
    return np.where(mask, dout, dout * slope)


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dout, y):
    return dout * (1 - y * y)


def sigmoid_forward(x):
    # split by sign so exp never overflows
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    y[~pos] = e / (1.0 + e)
    return y, y


def sigmoid_backward(dout, y):
    return dout * y * (1 - y)


def upsample2x_forward(x):
    return x.repeat(2, axis=2).repeat(2, axis=3), None


def upsample2x_backward(dout, cache=None):
    n, c, h2, w2 = dout.shape
    return dout.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


def dense_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense: input {x.shape} incompatible with weights {w.shape}")
    out = x @ w
    if b is not None:
        out += b
    return out, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(d * d)), (2.0 / d.size) * d


def bce_loss(pred, label):
    """Binary cross-entropy on probabilities, clamped to [1e-7, 1 - 1e-7]."""
    label = np.broadcast_to(np.asarray(label, dtype=pred.dtype), pred.shape)
    p = np.clip(pred, BCE_CLAMP, 1 - BCE_CLAMP)
    loss = -np.mean(label * np.log(p) + (1 - label) * np.log(1 - p))
    grad = (p - label) / (p * (1 - p)) / pred.size
    grad = np.where((pred > BCE_CLAMP) & (pred < 1 - BCE_CLAMP), grad, 0.0)
    return float(loss), grad.astype(pred.dtype)
