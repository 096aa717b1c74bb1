"""Stateful layers built on :mod:`stegopurge.neural.ops`.

A layer owns its parameters (:class:`Param`), optional buffers (batchnorm
running statistics) and child layers.  ``forward(x, train)`` remembers
what ``backward`` needs only when ``keep`` is true (default: ``train``),
so inference never holds activations and never mutates the layer.
Gradients accumulate into ``Param.grad`` until :meth:`Layer.zero_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)


class Layer:
    def __init__(self):
        self._params: dict[str, Param] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Layer] = {}
        self._cache = None

    # -- bookkeeping --------------------------------------------------------
    def add_param(self, name, value):
        self._params[name] = Param(np.asarray(value, dtype=np.float32))
        return self._params[name]

    def add_child(self, name, layer):
        self._children[name] = layer
        return layer

    def named_params(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_params(f"{prefix}{cname}.")

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def params(self) -> dict[str, Param]:
        return dict(self.named_params())

    def state(self) -> dict[str, np.ndarray]:
        """Every tensor that defines forward behaviour, parameters then buffers."""
        out = {name: p.value for name, p in self.named_params()}
        out.update(self.named_buffers())
        return out

    def load_state(self, tensors: dict[str, np.ndarray]):
        for name, p in self.named_params():
            p.value[...] = tensors[name]
        for name, b in self.named_buffers():
            b[...] = tensors[name]

    def n_params(self) -> int:
        return sum(p.value.size for _, p in self.named_params())

    def zero_grad(self):
        for _, p in self.named_params():
            p.grad[...] = 0

    def astype(self, dtype):
        """Convert parameters and buffers in place (float64 shadow mode)."""
        for p in self._params.values():
            p.value = p.value.astype(dtype)
            p.grad = p.grad.astype(dtype)
        for k in self._buffers:
            self._buffers[k] = self._buffers[k].astype(dtype)
        for child in self._children.values():
            child.astype(dtype)
        return self

    # -- computation --------------------------------------------------------
    def forward(self, x, train=False, keep=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def __call__(self, x, train=False, keep=None):
        return self.forward(x, train, keep)

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a kept forward")
        cache, self._cache = self._cache, None
        return cache


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def xavier_normal(rng, shape, fan_in, fan_out):
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


class Conv2d(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride=1, pad=None, rng=None, init="he"):
        super().__init__()
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        self.kernel = kernel
        shape = (out_ch, in_ch, kernel, kernel)
        fan_in = in_ch * kernel * kernel
        if rng is None:
            w = np.zeros(shape)
        elif init == "xavier":
            w = xavier_normal(rng, shape, fan_in, out_ch * kernel * kernel)
        else:
            w = he_normal(rng, shape, fan_in)
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros(out_ch))

    def forward(self, x, train=False, keep=None):
        out, cache = ops.conv2d_forward(x, self.weight.value, self.bias.value, self.stride, self.pad)
        self._cache = cache if (train if keep is None else keep) else None
        return out

    def backward(self, dout):
        dx, dw, db = ops.conv2d_backward(dout, self._need_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        n, _, h, w = shape
        f = self.weight.value.shape[0]
        return (n, f, ops.conv_output_size(h, self.kernel, self.stride, self.pad),
                ops.conv_output_size(w, self.kernel, self.stride, self.pad))


class BatchNorm2d(Layer):
    def __init__(self, channels):
        super().__init__()
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self._buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x, train=False, keep=None):
        out, cache = ops.batchnorm_forward(
            x, self.gamma.value, self.beta.value,
            self._buffers["running_mean"], self._buffers["running_var"], train)
        self._cache = cache if (train if keep is None else keep) else None
        return out

    def backward(self, dout):
        dx, dg, db = ops.batchnorm_backward(dout, self._need_cache())
        self.gamma.grad += dg
        self.beta.grad += db
        return dx


class _Elementwise(Layer):
    _fwd = None
    _bwd = None

    def forward(self, x, train=False, keep=None):
        out, cache = type(self)._fwd(x)
        self._cache = cache if (train if keep is None else keep) else None
        return out

    def backward(self, dout):
        return type(self)._bwd(dout, self._need_cache())


class ReLU(_Elementwise):
    _fwd = staticmethod(ops.relu_forward)
    _bwd = staticmethod(ops.relu_backward)


class Tanh(_Elementwise):
    _fwd = staticmethod(ops.tanh_forward)
    _bwd = staticmethod(ops.tanh_backward)


class Sigmoid(_Elementwise):
    _fwd = staticmethod(ops.sigmoid_forward)
    _bwd = staticmethod(ops.sigmoid_backward)


class LeakyReLU(Layer):
    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x, train=False, keep=None):
        out, cache = ops.leaky_relu_forward(x, self.slope)
        self._cache = cache if (train if keep is None else keep) else None
        return out

    def backward(self, dout):
        return ops.leaky_relu_backward(dout, self._need_cache())


class Upsample2x(Layer):
    """Nearest-neighbour upsampling by a factor of 2."""

    def forward(self, x, train=False, keep=None):
        return ops.upsample2x_forward(x)[0]

    def backward(self, dout):
        return ops.upsample2x_backward(dout)

    def output_shape(self, shape):
        n, c, h, w = shape
        return (n, c, 2 * h, 2 * w)


class Scale(Layer):
    """Fixed affine map ``y = x * scale + shift`` (e.g. pixels to [0, 1])."""

    def __init__(self, scale, shift=0.0):
        super().__init__()
        self.scale = scale
        self.shift = shift

    def forward(self, x, train=False, keep=None):
        return x * x.dtype.type(self.scale) + x.dtype.type(self.shift)

    def backward(self, dout):
        return dout * dout.dtype.type(self.scale)


class Flatten(Layer):
    def forward(self, x, train=False, keep=None):
        if train if keep is None else keep:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))


class Dense(Layer):
    def __init__(self, d_in, d_out, rng=None, init="he"):
        super().__init__()
        if rng is None:
            w = np.zeros((d_in, d_out))
        elif init == "xavier":
            w = xavier_normal(rng, (d_in, d_out), d_in, d_out)
        else:
            w = he_normal(rng, (d_in, d_out), d_in)
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros(d_out))

    def forward(self, x, train=False, keep=None):
        out, cache = ops.dense_forward(x, self.weight.value, self.bias.value)
        self._cache = cache if (train if keep is None else keep) else None
        return out

    def backward(self, dout):
        dx, dw, db = ops.dense_backward(dout, self._need_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        return (shape[0], self.weight.value.shape[1])


class Sequential(Layer):
    def __init__(self, *layers, names=None):
        super().__init__()
        names = names or [str(i) for i in range(len(layers))]
        for name, layer in zip(names, layers):
            self.add_child(name, layer)

    @property
    def layers(self):
        return list(self._children.values())

    def __getitem__(self, key):
        if isinstance(key, int):
            return self.layers[key]
        return self._children[key]

    def __len__(self):
        return len(self._children)

    def forward(self, x, train=False, keep=None):
        for layer in self._children.values():
            x = layer.forward(x, train, keep)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def output_shape(self, shape):
        for layer in self._children.values():
            shape = layer.output_shape(shape)
        return shape


class Residual(Layer):
    """``y = x + body(x)``."""

    def __init__(self, body):
        super().__init__()
        self.body = self.add_child("body", body)

    def forward(self, x, train=False, keep=None):
        return x + self.body.forward(x, train, keep)

    def backward(self, dout):
        return dout + self.body.backward(dout)

    def output_shape(self, shape):
        out = self.body.output_shape(shape)
        if tuple(out) != tuple(shape):
            raise ValueError(f"residual body changes shape {shape} -> {out}")
        return shape
