"""Datasets of conformations, splits and batching."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from geometry.molecule import MoleculeConf
from model.predict import Normalization

logger = logging.getLogger(__name__)

TARGET_KINDS = ("pes", "dipole", "r2", "none")
DEFAULT_UNITS = {"positions": "Å", "energy": "kcal/mol", "forces": "kcal/mol/Å", "dipole": "D", "r2": "a0^2"}
MODEL_TARGET = {"pes": "energy", "dipole": "dipole", "r2": "r2"}


def infer_target(confs: Sequence[MoleculeConf]) -> str:
    """The single target kind every conformation carries."""
    if not confs:
        return "none"
    if all(c.energy is not None for c in confs):
        return "pes"
    if any(c.energy is not None for c in confs):
        raise ValueError("some conformations have an energy and some do not")
    for key in ("dipole", "r2"):
        if all(key in c.properties for c in confs):
            return key
    return "none"


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    A list of conformations sharing one target kind.

    Attributes:
        confs: the conformations
        target: "pes" (energy, optionally forces), "dipole", "r2" or "none"
        units: unit of each quantity
        source: where the data came from, for messages
    """

    confs: Tuple[MoleculeConf, ...]
    target: str = "pes"
    units: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_UNITS))
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "confs", tuple(self.confs))
        if self.target not in TARGET_KINDS:
            raise ValueError(f"target must be one of {TARGET_KINDS}, got {self.target!r}")
        for k, conf in enumerate(self.confs):
            if self.target == "pes" and conf.energy is None:
                raise ValueError(f"conformation {k} has no energy")
            if self.target in ("dipole", "r2") and self.target not in conf.properties:
                raise ValueError(f"conformation {k} has no {self.target} value")
        if self.target == "pes":
            with_forces = [c.forces is not None for c in self.confs]
            if any(with_forces) and not all(with_forces):
                raise ValueError("forces must be given for all conformations or none")

    @classmethod
    def from_confs(cls, confs: Sequence[MoleculeConf], target: Optional[str] = None, source: str = "") -> "Dataset":
        return cls(tuple(confs), target=target or infer_target(confs), source=source)

    def __len__(self) -> int:
        return len(self.confs)

    def __getitem__(self, index) -> MoleculeConf:
        return self.confs[index]

    def __iter__(self) -> Iterator[MoleculeConf]:
        return iter(self.confs)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.confs[int(k)] for k in indices), self.target, dict(self.units), self.source)

    @property
    def has_forces(self) -> bool:
        return self.target == "pes" and bool(self.confs) and self.confs[0].forces is not None

    @property
    def species(self) -> Tuple[int, ...]:
        return tuple(sorted({int(z) for conf in self.confs for z in conf.z}))

    def energies(self) -> np.ndarray:
        if self.target != "pes":
            raise ValueError(f"dataset has no energy targets (target kind {self.target!r})")
        return np.array([c.energy for c in self.confs], dtype=np.float64)

    def forces(self) -> np.ndarray:
        """All reference forces stacked in atom order, shape (N_total, 3)."""
        if not self.has_forces:
            raise ValueError("dataset has no force targets")
        return np.concatenate([c.forces for c in self.confs])

    def values(self, key: str) -> np.ndarray:
        return np.array([c.properties[key] for c in self.confs], dtype=np.float64)

    def targets(self) -> np.ndarray:
        """Per-molecule scalar targets for the dataset's kind."""
        if self.target == "pes":
            return self.energies()
        if self.target == "none":
            raise ValueError("dataset has no targets")
        return self.values(self.target)


def split_dataset(ds: Dataset, sizes: Sequence[int], seed: int = 0) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Random train/validation/test split.

    Args:
        ds: dataset to split
        sizes: (n_train, n_val); the remainder becomes the test set
        seed: permutation seed

    Returns:
        (train, val, test), disjoint and together covering ``ds``

    Raises:
        ValueError: the requested sizes exceed the dataset
    """
    if len(sizes) != 2 or any(int(s) < 0 for s in sizes):
        raise ValueError(f"sizes must be two non-negative counts, got {tuple(sizes)}")
    n_train, n_val = (int(s) for s in sizes)
    if n_train + n_val > len(ds):
        raise ValueError(f"insufficient data: {n_train} + {n_val} requested from {len(ds)} conformations")
    order = np.random.default_rng(seed).permutation(len(ds))
    train = ds.subset(order[:n_train])
    val = ds.subset(order[n_train : n_train + n_val])
    test = ds.subset(order[n_train + n_val :])
    logger.info("Split %d conformations into %d/%d/%d", len(ds), len(train), len(val), len(test))
    return train, val, test


def energy_normalization(ds: Dataset) -> Normalization:
    """Per-atom mean energy and the spread of what remains.

    Dividing by a vanishing spread is avoided by falling back to 1.
    """
    energies = ds.energies()
    counts = np.array([c.n_atoms for c in ds.confs], dtype=np.float64)
    per_atom_mean = float(np.sum(energies) / np.sum(counts))
    std = float(np.std(energies - per_atom_mean * counts))
    if not np.isfinite(std) or std < 1e-12:
        std = 1.0
    return Normalization(per_atom_mean=per_atom_mean, std=std)


def batches(ds: Dataset, batch_size: int, rng: Optional[np.random.Generator] = None) -> List[List[MoleculeConf]]:
    """Consecutive batches, shuffled first when ``rng`` is given."""
    if batch_size < 1:
        raise ValueError(f"batch size must be positive, got {batch_size}")
    order = np.arange(len(ds)) if rng is None else rng.permutation(len(ds))
    return [[ds.confs[k] for k in order[i : i + batch_size]] for i in range(0, len(ds), batch_size)]
