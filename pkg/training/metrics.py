"""Batched inference over a dataset and mean absolute errors."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from geometry.molecule import MoleculeConf, collate
from model.predict import GNNLF
from training.dataset import MODEL_TARGET, Dataset, batches

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Predictions:
    """Per-molecule outputs and, for energy models, stacked per-atom forces."""

    values: np.ndarray
    forces: Optional[np.ndarray] = None

    def forces_per_conf(self, confs: Sequence[MoleculeConf]) -> List[np.ndarray]:
        if self.forces is None:
            raise ValueError("no forces were predicted")
        bounds = np.cumsum([0] + [c.n_atoms for c in confs])
        return [self.forces[bounds[k] : bounds[k + 1]] for k in range(len(confs))]


def _predict_batch(model: GNNLF, confs: List[MoleculeConf], with_forces: bool):
    batch = collate(confs)
    if with_forces:
        return model.energy_and_forces(batch)
    return model.predict(batch), None


def predict_dataset(
    model: GNNLF, ds: Dataset, batch_size: int = 64, workers: int = 1, with_forces: Optional[bool] = None
) -> Predictions:
    """
    Run the model on every conformation.

    Batches are evaluated by ``workers`` threads against the same parameters;
    results are gathered in dataset order.

    Args:
        with_forces: differentiate for forces; defaults to True for energy models
    """
    if len(ds) == 0:
        raise ValueError("cannot predict on an empty dataset")
    if with_forces is None:
        with_forces = model.config.target == "energy"
    chunks = batches(ds, batch_size)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _predict_batch(model, c, with_forces), chunks))
    else:
        results = [_predict_batch(model, c, with_forces) for c in chunks]
    values = np.concatenate([r[0] for r in results])
    forces = np.concatenate([r[1] for r in results]) if with_forces else None
    return Predictions(values=values, forces=forces)


def check_compatible(model: GNNLF, ds: Dataset) -> None:
    """The model's output head must match the dataset's targets."""
    expected = MODEL_TARGET.get(ds.target)
    if expected is not None and model.config.target != expected:
        raise ValueError(f"model predicts {model.config.target!r} but the dataset holds {ds.target!r} targets")


def mae(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("no values to compare")
    return float(np.mean(np.abs(pred - target)))


@dataclass(frozen=True)
class Metrics:
    """
    Mean absolute errors on one dataset.

    Attributes:
        target: dataset target kind
        value_mae: energy MAE (kcal/mol) or property MAE
        force_mae: force MAE over atoms and components, None when the data has no forces
        count: number of conformations
    """

    target: str
    value_mae: float
    force_mae: Optional[float]
    count: int

    @property
    def energy_mae(self) -> Optional[float]:
        return self.value_mae if self.target == "pes" else None

    def to_dict(self) -> dict:
        data = {"target": self.target, "count": self.count}
        if self.target == "pes":
            data["energy_mae"] = self.value_mae
            if self.force_mae is not None:
                data["force_mae"] = self.force_mae
        else:
            data[f"{self.target}_mae"] = self.value_mae
        return data


def evaluate_mae(model: GNNLF, ds: Dataset, batch_size: int = 64, workers: int = 1) -> Metrics:
    """
    Per-target mean absolute errors of ``model`` on ``ds``.

    Raises:
        ValueError: the dataset carries no targets
    """
    if ds.target == "none":
        raise ValueError("missing targets: dataset has no energies or properties")
    check_compatible(model, ds)
    predictions = predict_dataset(model, ds, batch_size, workers, with_forces=ds.has_forces)
    value_mae = mae(predictions.values, ds.targets())
    force_mae = mae(predictions.forces, ds.forces()) if ds.has_forces else None
    logger.debug("MAE on %d conformations: %s / %s", len(ds), value_mae, force_mae)
    return Metrics(target=ds.target, value_mae=value_mae, force_mae=force_mae, count=len(ds))
