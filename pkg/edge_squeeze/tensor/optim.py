"""Optimizers updating named parameters in place."""
from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from edge_squeeze.models.errors import ShapeError

from .tensor import Tensor


class Adam:
    """Adam with bias correction folded into the step size."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-7,
    ) -> None:
        """Initialize."""
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()
        }
        self.v: Dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()
        }

    def zero_grad(self) -> None:
        """Clear gradients of all parameters."""
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        """Apply one update from the accumulated gradients."""
        self.step_count += 1
        step_size = (
            self.lr
            * np.sqrt(1.0 - self.beta2**self.step_count)
            / (1.0 - self.beta1**self.step_count)
        )
        for name, param in self.params.items():
            if param.grad is None:
                continue
            grad = param.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param.data -= (step_size * m / (np.sqrt(v) + self.epsilon)).astype(param.dtype)

    def state_dict(self) -> dict:
        """Return the optimizer state (moment buffers are not copied)."""
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state_dict(self, state: dict) -> None:
        """Restore optimizer state, buffers must match the parameter shapes."""
        for key in ("m", "v"):
            for name, value in state[key].items():
                if name not in self.params:
                    continue
                if value.shape != self.params[name].shape:
                    raise ShapeError(
                        f"Optimizer state {key}[{name}] has shape {value.shape}, "
                        f"expected {self.params[name].shape}"
                    )
                getattr(self, key)[name][...] = value
        self.step_count = int(state["step"])
