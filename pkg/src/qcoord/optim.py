"""Adam over named parameter dicts.

Parameters are numpy arrays, either float64 or complex128. Complex arrays
carry gradients in the dL/dRe + i dL/dIm convention, so Adam treats them as
their interleaved real views and the update is plain real Adam throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _real_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


@dataclass
class AdamState:
    """First/second moment accumulators per parameter plus the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for name, value in params.items():
            real = _real_view(value)
            state.m[name] = np.zeros_like(real)
            state.v[name] = np.zeros_like(real)
        return state


def adam_step(params: dict, grads: dict, state: AdamState, lr) -> None:
    """One in-place Adam update of every named parameter.

    ``lr`` is a float, or a dict mapping parameter names to rates.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, value in params.items():
        g = np.asarray(grads[name])
        if np.iscomplexobj(g) != np.iscomplexobj(value):
            g = g.astype(value.dtype)
        g = _real_view(g)
        x = _real_view(value)
        if g.shape != x.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        rate = lr[name] if isinstance(lr, dict) else lr
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        x -= rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


def clone_params(params: dict) -> dict:
    return {k: np.array(v, copy=True) for k, v in params.items()}
