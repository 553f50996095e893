"""Adam with an exponentially decayed learning rate."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


def decayed_lr(lr: float, t: int, decay_steps: int, decay_rate: float) -> float:
    """lr * decay_rate ** (t / decay_steps), continuous exponent."""
    return lr * decay_rate ** (t / decay_steps)


def adam_step(store: ParamStore, lr: float, t: int,
              decay_steps: int = 10000, decay_rate: float = 0.95,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamStore:
    """Apply one Adam update from the gradients currently in the store.

    ``t`` is the zero-based global step driving the learning-rate decay;
    bias correction uses the store's own update count.  Parameters with
    no gradient are left untouched.
    """
    step_lr = decayed_lr(lr, t, decay_steps, decay_rate)
    store.adam_steps += 1
    k = store.adam_steps
    c1 = 1.0 - beta1 ** k
    c2 = 1.0 - beta2 ** k
    for name, p in store.items():
        if p.grad is None:
            continue
        g = p.grad
        m = store._adam_m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = store._adam_v[name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        store._adam_m[name] = m
        store._adam_v[name] = v
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = p.data - (step_lr * update).astype(p.data.dtype, copy=False)
    return store
