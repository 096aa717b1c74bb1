"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """d f / d x by central differences; ``f`` reads ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check_layer(layer, x: np.ndarray, train: bool = True, seed: int = 0, h: float = 1e-4):
    """Compare a layer's backward against finite differences of ``sum(w * y)``.

    Runs in float64.  Returns ``{"input": err, <param name>: err, ...}``.
    Batchnorm running statistics are restored around every probe so the
    probes do not drift the layer.
    """
    layer.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    buffers = {k: v.copy() for k, v in layer.named_buffers()}

    def restore():
        for k, v in layer.named_buffers():
            v[...] = buffers[k]

    restore()
    y = layer.forward(x, train=train, keep=False)
    proj = np.random.default_rng(seed).standard_normal(y.shape)

    def loss():
        restore()
        return float(np.sum(layer.forward(x, train=train, keep=False) * proj))

    restore()
    layer.zero_grad()
    layer.forward(x, train=train, keep=True)
    dx = layer.backward(proj)
    errors = {"input": rel_error(dx, numerical_grad(loss, x, h))}
    for name, p in layer.named_params():
        errors[name] = rel_error(p.grad, numerical_grad(loss, p.value, h))
    restore()
    return errors
