"""Model wrapper: predictions in physical units, forces by differentiation, checkpoints."""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from geometry.molecule import MoleculeBatch, MoleculeConf, as_batch
from model import network
from model.config import ModelConfig
from model.params import ModelParams
from tensor_core import Tape, Tensor, backward, load_tensors, ops, save_tensors
from utils.errors import NonFiniteError, SpeciesError

logger = logging.getLogger(__name__)

Molecules = Union[MoleculeConf, MoleculeBatch]


@dataclass(frozen=True)
class Normalization:
    """Energy scaling: E = std · ê + n_atoms · per_atom_mean."""

    per_atom_mean: float = 0.0
    std: float = 1.0

    def to_dict(self) -> dict:
        return {"per_atom_mean": self.per_atom_mean, "std": self.std}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalization":
        return cls(per_atom_mean=float(data["per_atom_mean"]), std=float(data["std"]))


class GNNLF:
    """A configured network with its parameters.

    Attributes:
        config: ModelConfig
        params: ModelParams
        normalization: energy scaling applied to raw outputs
    """

    def __init__(self, config: ModelConfig, params: Optional[ModelParams] = None, normalization: Normalization = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else ModelParams.initialize(config, seed)
        if self.params.config != config:
            raise ValueError("parameters were created for a different configuration")
        self.normalization = normalization or Normalization()

    def with_params(self, params: ModelParams) -> "GNNLF":
        return GNNLF(self.config, params, self.normalization)

    # Raw (normalized) outputs on a tape

    def raw_output(self, batch: MoleculeBatch, positions: Tensor, bound) -> Tensor:
        state = network.forward(batch, positions, bound, self.config)
        if self.config.target == "dipole":
            return network.dipole_head(batch, positions, state.features, bound)
        if self.config.target == "r2":
            return network.r2_head(batch, positions, state.features, bound)
        return network.energy_head(batch, state.features, bound, self.config)

    def to_physical(self, batch: MoleculeBatch, raw: np.ndarray) -> np.ndarray:
        if self.config.target != "energy":
            return raw
        return self.normalization.std * raw + self.normalization.per_atom_mean * batch.counts

    # Predictions

    def predict(self, molecules: Molecules) -> np.ndarray:
        """Per-molecule target values (energy, dipole or r2)."""
        batch = as_batch(molecules)
        raw = self.raw_output(batch, Tensor(batch.r), network.bind(self.params))
        return self.to_physical(batch, raw.numpy())

    def energy_and_forces(self, molecules: Molecules) -> Tuple[np.ndarray, np.ndarray]:
        """Energies (n_mols,) and forces (N_total, 3) as the negative coordinate gradient."""
        batch = as_batch(molecules)
        tape = Tape()
        positions = tape.watch(batch.r, name="positions")
        energies = self.raw_output(batch, positions, network.bind(self.params))
        total = ops.reduce_sum(energies)
        grads = backward(tape, total)
        forces = -self.normalization.std * grads[positions]
        if not np.all(np.isfinite(forces)):
            raise NonFiniteError("force prediction is not finite")
        return self.to_physical(batch, energies.numpy()), forces

    def predict_energy(self, conf: MoleculeConf) -> float:
        return float(self.predict(conf)[0])

    def predict_forces(self, conf: MoleculeConf) -> np.ndarray:
        return self.energy_and_forces(conf)[1]

    def predict_dipole(self, conf: MoleculeConf) -> float:
        batch = as_batch(conf)
        bound = network.bind(self.params)
        state = network.forward(batch, Tensor(batch.r), bound, self.config)
        return float(network.dipole_head(batch, Tensor(batch.r), state.features, bound).numpy()[0])

    def predict_r2(self, conf: MoleculeConf, masses: Optional[Mapping[int, float]] = None) -> float:
        """Electronic spatial extent; ``masses`` maps atomic number to mass (default: ase.data)."""
        batch = as_batch(conf)
        if masses is not None:
            missing = sorted(set(batch.z.tolist()) - set(masses))
            if missing:
                raise SpeciesError(f"no mass given for atomic numbers {missing}")
            masses = np.array([masses[int(z)] for z in batch.z], dtype=np.float64)
        bound = network.bind(self.params)
        state = network.forward(batch, Tensor(batch.r), bound, self.config)
        return float(network.r2_head(batch, Tensor(batch.r), state.features, bound, masses).numpy()[0])

    def embeddings(self, conf: Molecules) -> np.ndarray:
        """Neighborhood embeddings s⁽⁰⁾ of every atom."""
        batch = as_batch(conf)
        bound = network.bind(self.params)
        graph = network.neighbor_graph(batch, Tensor(batch.r), bound, self.config)
        return network.embed_atoms(batch, graph, bound, self.config).numpy()

    # Checkpoints

    def save(self, path, extra: dict = None):
        metadata = {
            "kind": "gnnlf",
            "config": self.config.to_dict(),
            "normalization": self.normalization.to_dict(),
        }
        if extra:
            metadata["extra"] = extra
        return save_tensors(path, self.params.tensors, metadata)

    @classmethod
    def load(cls, path) -> "GNNLF":
        tensors, metadata = load_tensors(path)
        if metadata.get("kind") != "gnnlf":
            raise ValueError(f"{path} is not a model checkpoint")
        config = ModelConfig.from_dict(metadata["config"])
        normalization = Normalization.from_dict(metadata["normalization"])
        logger.info("Loaded checkpoint %s", path)
        return cls(config, ModelParams(config, tensors), normalization)


def predict_energy(conf: MoleculeConf, params: ModelParams, config: ModelConfig) -> float:
    return GNNLF(config, params).predict_energy(conf)


def predict_forces(conf: MoleculeConf, params: ModelParams, config: ModelConfig) -> np.ndarray:
    return GNNLF(config, params).predict_forces(conf)


def predict_dipole(conf: MoleculeConf, params: ModelParams) -> float:
    return GNNLF(params.config, params).predict_dipole(conf)


def predict_r2(conf: MoleculeConf, params: ModelParams, atom_masses=None) -> float:
    return GNNLF(params.config, params).predict_r2(conf, atom_masses)


def save_checkpoint(model: GNNLF, path, extra: dict = None):
    """Parameters, configuration, normalization and target kind in one ``.npz`` file."""
    return model.save(path, extra)


def load_checkpoint(path) -> GNNLF:
    return GNNLF.load(path)
