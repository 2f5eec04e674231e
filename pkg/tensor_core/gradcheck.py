from typing import Callable

import numpy as np

from tensor_core.tensor import Tape, Tensor, backward
from utils.errors import NonFiniteError

EPS = 1e-12


def numerical_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for k in range(x.size):
        step = np.zeros(x.size)
        step[k] = h
        step = step.reshape(x.shape)
        try:
            up = float(f(Tensor(x + step)))
            down = float(f(Tensor(x - step)))
        except NonFiniteError as e:
            raise NonFiniteError(f"function is non-finite near coordinate {k}: {e}")
        flat[k] = (up - down) / (2.0 * h)
    return grad


def analytic_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    tape = Tape()
    leaf = tape.watch(np.asarray(x, dtype=np.float64), name="x")
    out = f(leaf)
    if not out.requires_grad:
        # f ignores its input
        return np.zeros_like(leaf.data)
    return backward(tape, out)[leaf]


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5, reduction: str = "elementwise") -> float:
    """Largest relative disagreement between tape gradients and central differences.

    Args:
        f: scalar-valued function of one tensor
        x: point to check at
        h: finite-difference step, must be positive
        reduction: "elementwise" divides each coordinate's error by |analytic| + 1e-12;
            "global" divides the largest error by the largest |analytic| + 1e-12

    Returns:
        max relative error as a float
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    analytic = analytic_gradient(f, x)
    numeric = numerical_gradient(f, x, h)
    error = np.abs(analytic - numeric)
    if reduction == "elementwise":
        return float(np.max(error / (np.abs(analytic) + EPS), initial=0.0))
    if reduction == "global":
        return float(np.max(error, initial=0.0) / (np.max(np.abs(analytic), initial=0.0) + EPS))
    raise ValueError(f"Unknown reduction {reduction!r}")
