"""Adam optimizer over a ParamStore."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import ParamStore
from .errors import ConfigError


@dataclass
class AdamState:
    """Per-parameter first/second moments and the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> "AdamState":
        state = cls()
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state


def adam_step(params: ParamStore, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update with bias correction; zeroes gradients afterwards."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
    state.t += 1
    for name, tensor in params.items():
        grad = tensor.grad
        if grad is None:
            grad = np.zeros_like(tensor.data)
        g = np.ascontiguousarray(grad, dtype=np.float64).ravel()
        kernels.adam_update(tensor.data.ravel(), g,
                            state.m[name].ravel(), state.v[name].ravel(),
                            state.t, lr, beta1, beta2, eps)
    params.zero_grads()
