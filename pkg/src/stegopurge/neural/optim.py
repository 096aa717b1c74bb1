"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# default optimizer settings for generator and discriminator
LEARNING_RATE = 1e-3
BETA1 = 0.5
BETA2 = 0.9
EPS = 1e-8


@dataclass
class AdamState:
    lr: float = LEARNING_RATE
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One Adam update.  Returns new parameter arrays; ``state`` is advanced.

    ``params`` and ``grads`` map names to arrays of matching shape.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam: gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        out[name] = p - (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return out


class Adam:
    """Optimizer bound to a layer's :class:`~stegopurge.neural.layers.Param` set."""

    def __init__(self, params: dict, lr=LEARNING_RATE, beta1=BETA1, beta2=BETA2, eps=EPS):
        self.params = params
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self):
        new = adam_step({k: p.value for k, p in self.params.items()},
                        {k: p.grad for k, p in self.params.items()}, self.state)
        for k, p in self.params.items():
            p.value[...] = new[k]

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0
