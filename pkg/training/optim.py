"""Adam and a reduce-on-plateau learning-rate schedule."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from utils.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates per parameter, and the step count."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(a) for name, a in params.items()},
            v={name: np.zeros_like(a) for name, a in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params: current values by name
        grads: gradients with the same names and shapes
        state: moments from the previous step (empty moments are created)
        lr: step size

    Returns:
        (new params, new state); inputs are not modified

    Raises:
        ShapeError: a gradient or moment does not match its parameter
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if set(grads) != set(params):
        raise ShapeError(f"gradients do not match parameters: {sorted(set(grads) ^ set(params))}")
    step = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        if grad.shape != value.shape or m.shape != value.shape or v.shape != value.shape:
            raise ShapeError(f"{name}: parameter {value.shape}, gradient {grad.shape}, state {m.shape}/{v.shape}")
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(m=new_m, v=new_v, step=step)


@dataclass
class PlateauScheduler:
    """
    Multiply the learning rate by ``factor`` once the monitored metric has gone
    ``patience`` evaluations without improving; never go below ``min_lr``.

    The metric is minimized. After a reduction the wait counter restarts.
    """

    lr: float
    factor: float = 0.8
    patience: int = 30
    min_lr: float = 1e-6
    threshold: float = 0.0
    best: float = float("inf")
    wait: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"factor must lie in (0, 1), got {self.factor}")
        if self.patience < 0:
            raise ValueError(f"patience must be non-negative, got {self.patience}")

    def step(self, metric: float) -> float:
        if not np.isfinite(metric):
            raise ValueError(f"scheduler metric must be finite, got {metric}")
        if metric < self.best - self.threshold:
            self.best = float(metric)
            self.wait = 0
            return self.lr
        self.wait += 1
        if self.wait >= self.patience:
            reduced = max(self.lr * self.factor, min(self.min_lr, self.lr))
            if reduced < self.lr:
                logger.info("Reducing learning rate %.3g -> %.3g", self.lr, reduced)
            self.lr = reduced
            self.wait = 0
        return self.lr

    def state_dict(self) -> dict:
        return {"lr": self.lr, "best": self.best, "wait": self.wait}


def plateau_scheduler(state: PlateauScheduler, val_metric: float) -> float:
    return state.step(val_metric)
