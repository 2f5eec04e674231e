"""Smooth cutoff and radial basis functions of interatomic distance."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from tensor_core import Tensor, as_tensor, ops


def cutoff_weight(r, r_c: float) -> Tensor:
    """Cosine cutoff ½(1 + cos(πr/r_c)) inside the cutoff sphere, zero outside.

    Value and slope both vanish at r = r_c, so messages fade out smoothly.
    """
    if r_c <= 0:
        raise ValueError(f"cutoff radius must be positive, got {r_c}")
    r = as_tensor(r)
    if np.any(r.data < 0):
        raise ValueError("distances must be non-negative")
    inside = r.data < r_c
    w = 0.5 * (ops.cos(r * (np.pi / r_c)) + 1.0)
    return ops.mask(w, inside)


def rbf_expand(r, betas, mus) -> Tensor:
    """Expand distances on exp(-β_k (exp(-r) - μ_k)²) bases.

    Args:
        r: distances, shape (E,) or scalar
        betas: widths, shape (K,), positive
        mus: centres in exp(-r) space, shape (K,)

    Returns:
        Tensor of shape (E, K), or (K,) for a scalar distance
    """
    r, betas, mus = as_tensor(r), as_tensor(betas), as_tensor(mus)
    if np.any(betas.data <= 0):
        raise ValueError("rbf widths must be positive")
    if betas.shape != mus.shape or betas.ndim != 1:
        raise ValueError(f"betas and mus must be matching 1-D arrays, got {betas.shape} and {mus.shape}")
    decay = ops.exp(-r)
    if r.ndim:
        # tile to (E, K); ops broadcast one side only
        decay = ops.matmul(ops.reshape(decay, (r.shape[0], 1)), np.ones((1, mus.shape[0])))
    return ops.exp(-(betas * ops.square(decay - mus)))


def rbf_init(count: int, r_c: float) -> Tuple[np.ndarray, np.ndarray]:
    """Initial (betas, mus): centres evenly spaced over [exp(-r_c), 1], shared width."""
    if count < 1:
        raise ValueError(f"rbf count must be at least 1, got {count}")
    low = float(np.exp(-r_c))
    if count == 1:
        mus = np.array([(low + 1.0) / 2.0])
    else:
        mus = np.linspace(low, 1.0, count)
    betas = np.full(count, (2.0 / count * (1.0 - low)) ** -2)
    return betas, mus


@dataclass(frozen=True, eq=False)
class RadialBasis:
    betas: Tensor
    mus: Tensor

    @classmethod
    def initial(cls, count: int, r_c: float) -> "RadialBasis":
        betas, mus = rbf_init(count, r_c)
        return cls(Tensor(betas), Tensor(mus))

    def __call__(self, r) -> Tensor:
        return rbf_expand(r, self.betas, self.mus)
