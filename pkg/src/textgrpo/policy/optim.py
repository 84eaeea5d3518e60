"""AdamW (Adam with decoupled weight decay) on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamW:
    """Optimizer state; :meth:`step` updates the parameter array in place.

    Update per step ``t`` (1-based), with ``g`` the gradient::

        theta <- theta * (1 - lr * weight_decay)
        m <- b1 m + (1 - b1) g ;  v <- b2 v + (1 - b2) g^2
        theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """

    size: int
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    v: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        if self.m.shape != (self.size,) or self.v.shape != (self.size,):
            raise ValueError("moment accumulators must match the parameter shape")

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        if params.shape != (self.size,) or grad.shape != (self.size,):
            raise ValueError("parameter/gradient shape mismatch")
        if not np.all(np.isfinite(grad)):
            bad = np.flatnonzero(~np.isfinite(grad))
            raise NonFiniteGradientError(f"{bad.size} non-finite gradient entries (first at index {bad[0]})")
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        if self.weight_decay:
            params *= 1.0 - lr * self.weight_decay
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**t)
        v_hat = self.v / (1.0 - self.beta2**t)
        params -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self) -> dict:
        return {
            "lr": self.lr, "weight_decay": self.weight_decay, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "step_count": self.step_count, "m": self.m, "v": self.v,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "AdamW":
        return cls(size=len(state["m"]), **state)


def optimizer_step(state: AdamW, params: np.ndarray, grad: np.ndarray, lr: float | None = None):
    """Functional spelling of :meth:`AdamW.step`; returns ``(params, state)``."""
    state.step(params, grad, lr)
    return params, state
