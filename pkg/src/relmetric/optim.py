"""RMSProp with an externally scheduled learning rate."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import NonFiniteError, ShapeError
from .tensor import Tensor


class RMSProp:
    """Keeps one squared-gradient accumulator per named parameter.

    ``acc <- decay * acc + (1 - decay) * g**2``
    ``param <- param - lr * g / sqrt(acc + eps)``
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 0.005, decay: float = 0.9, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.steps = 0
        self.accumulators = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.data.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {name!r} at optimizer step {self.steps}")
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            acc = self.accumulators[name]
            acc *= self.decay
            acc += (1.0 - self.decay) * g * g
            p.data -= self.lr * g / np.sqrt(acc + self.eps)
        self.steps += 1

    def state_dict(self) -> dict:
        return {"lr": self.lr, "decay": self.decay, "eps": self.eps, "steps": self.steps,
                "accumulators": {k: v.copy() for k, v in self.accumulators.items()}}

    def load_state_dict(self, state: dict) -> None:
        for name, acc in state["accumulators"].items():
            if name not in self.accumulators:
                raise ShapeError(f"optimizer state has unknown parameter {name!r}")
            if acc.shape != self.accumulators[name].shape:
                raise ShapeError(f"optimizer accumulator {name!r} has shape {acc.shape}, "
                                 f"expected {self.accumulators[name].shape}")
            self.accumulators[name] = np.array(acc, dtype=self.accumulators[name].dtype)
        self.lr = state["lr"]
        self.decay = state["decay"]
        self.eps = state["eps"]
        self.steps = state["steps"]
