"""Adam with bias correction, operating in place on named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """Apply one Adam update to ``params`` (name -> ndarray) in place.

    Parameters without an entry in ``grads`` are left untouched but still
    share the step counter.  Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient for {name!r} has shape {np.shape(g)}, parameter {np.shape(params[name])}")
    state.step += 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
