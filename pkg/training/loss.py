"""Training losses and their gradients with respect to the predictions."""

from typing import Optional, Tuple

import numpy as np

DEFAULT_RHO = 0.95


def _checked(pred, target, what: str) -> Tuple[np.ndarray, np.ndarray]:
    if target is None:
        raise ValueError(f"missing {what} targets")
    if pred is None:
        raise ValueError(f"missing {what} predictions")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"{what} predictions have shape {pred.shape}, targets {target.shape}")
    if pred.size == 0:
        raise ValueError(f"no {what} values")
    return pred, target


def pes_loss_and_grad(
    pred_energy, pred_forces, target_energy, target_forces, rho: float = DEFAULT_RHO
) -> Tuple[float, np.ndarray, Optional[np.ndarray]]:
    """
    Energy/force loss (1-ρ)·mean(ΔE²) + ρ·mean(ΔF²) and its gradients.

    The force mean runs over all 3·N_atoms components of the batch.

    Returns:
        (loss, dloss/dpred_energy, dloss/dpred_forces or None when ρ = 0)
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    e_pred, e_true = _checked(pred_energy, target_energy, "energy")
    e_res = e_pred - e_true
    loss = (1.0 - rho) * float(np.mean(e_res * e_res))
    d_energy = 2.0 * (1.0 - rho) * e_res / e_res.size
    d_forces = None
    if rho > 0.0:
        f_pred, f_true = _checked(pred_forces, target_forces, "force")
        f_res = f_pred - f_true
        loss += rho * float(np.mean(f_res * f_res))
        d_forces = 2.0 * rho * f_res / f_res.size
    return loss, d_energy, d_forces


def loss_pes(pred_energy, pred_forces, target_energy, target_forces, rho: float = DEFAULT_RHO) -> float:
    return pes_loss_and_grad(pred_energy, pred_forces, target_energy, target_forces, rho)[0]


def property_loss_and_grad(pred, target) -> Tuple[float, np.ndarray]:
    pred, target = _checked(pred, target, "property")
    res = pred - target
    return float(np.mean(res * res)), 2.0 * res / res.size


def loss_property(pred, target) -> float:
    """Mean squared error of a scalar molecular property."""
    return property_loss_and_grad(pred, target)[0]
