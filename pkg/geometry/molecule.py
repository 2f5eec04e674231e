"""Molecular conformations and their batched form."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import ortho_group, special_ortho_group

from utils.errors import GeometryError

MIN_DISTANCE = 1e-6


def min_pair_distance(r: np.ndarray) -> float:
    if len(r) < 2:
        return float("inf")
    diff = r[:, None, :] - r[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.diag_indices(len(r))] = np.inf
    return float(dist.min())


@dataclass(frozen=True, eq=False)
class MoleculeConf:
    """One molecular conformation.

    Attributes:
        z: atomic numbers, shape (N,)
        r: coordinates in Å, shape (N, 3)
        energy: reference energy in kcal/mol, if known
        forces: reference forces in kcal/mol/Å, shape (N, 3), if known
        properties: other scalar targets read from the data file (e.g. "dipole", "r2")
    """

    z: np.ndarray
    r: np.ndarray
    energy: Optional[float] = None
    forces: Optional[np.ndarray] = None
    properties: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int64).reshape(-1)
        r = np.asarray(self.r, dtype=np.float64)
        if z.size < 1:
            raise GeometryError("A conformation needs at least one atom")
        if r.shape != (z.size, 3):
            raise GeometryError(f"Coordinates must have shape ({z.size}, 3), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise GeometryError("Coordinates must be finite")
        closest = min_pair_distance(r)
        if closest <= MIN_DISTANCE:
            raise GeometryError(f"Coincident atoms: closest pair is {closest:.3e} Å apart")
        forces = self.forces
        if forces is not None:
            forces = np.asarray(forces, dtype=np.float64)
            if forces.shape != r.shape:
                raise GeometryError(f"Forces must have shape {r.shape}, got {forces.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "forces", forces)
        if self.energy is not None:
            object.__setattr__(self, "energy", float(self.energy))

    @property
    def n_atoms(self) -> int:
        return int(self.z.size)

    def permuted(self, perm: Sequence[int]) -> "MoleculeConf":
        """Reorder atoms so that new atom k is old atom ``perm[k]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n_atoms)):
            raise ValueError(f"{perm.tolist()} is not a permutation of {self.n_atoms} atoms")
        return MoleculeConf(
            z=self.z[perm],
            r=self.r[perm],
            energy=self.energy,
            forces=None if self.forces is None else self.forces[perm],
            properties=dict(self.properties),
        )

    def transformed(self, rotation: np.ndarray, translation=None) -> "MoleculeConf":
        """Apply r -> r Qᵀ + t; forces rotate with the coordinates."""
        q = np.asarray(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return MoleculeConf(
            z=self.z,
            r=self.r @ q.T + t,
            energy=self.energy,
            forces=None if self.forces is None else self.forces @ q.T,
            properties=dict(self.properties),
        )

    def with_targets(self, energy=None, forces=None) -> "MoleculeConf":
        return MoleculeConf(z=self.z, r=self.r, energy=energy, forces=forces, properties=dict(self.properties))


@dataclass(frozen=True, eq=False)
class MoleculeBatch:
    """Several conformations stacked into one disjoint system.

    Attributes:
        z: atomic numbers of all atoms, shape (N_total,)
        r: coordinates of all atoms, shape (N_total, 3)
        mol_index: molecule id of every atom
        n_mols: number of molecules
    """

    z: np.ndarray
    r: np.ndarray
    mol_index: np.ndarray
    n_mols: int

    @property
    def n_atoms(self) -> int:
        return int(self.z.size)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.mol_index, minlength=self.n_mols)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])


def collate(confs: Sequence[MoleculeConf]) -> MoleculeBatch:
    if not confs:
        raise ValueError("Cannot collate an empty list of conformations")
    return MoleculeBatch(
        z=np.concatenate([c.z for c in confs]),
        r=np.concatenate([c.r for c in confs]),
        mol_index=np.concatenate([np.full(c.n_atoms, k, dtype=np.int64) for k, c in enumerate(confs)]),
        n_mols=len(confs),
    )


def as_batch(conf) -> MoleculeBatch:
    if isinstance(conf, MoleculeBatch):
        return conf
    return collate([conf])


def random_rotation(rng: np.random.Generator, reflect: bool = True) -> np.ndarray:
    """Haar-random 3x3 orthogonal matrix; proper rotations only when ``reflect`` is False."""
    group = ortho_group if reflect else special_ortho_group
    return group.rvs(3, random_state=rng)


def random_conformation(
    rng: np.random.Generator,
    n_atoms: int,
    species: Sequence[int] = (1, 6, 7, 8),
    bond: float = 1.4,
    min_distance: float = 0.9,
) -> MoleculeConf:
    """A random connected cluster grown atom by atom.

    Each new atom sits between ``bond`` and 1.2·``bond`` from a randomly chosen
    earlier atom and at least ``min_distance`` from all of them; atomic numbers
    are drawn from ``species``.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be positive")
    r = [np.zeros(3)]
    while len(r) < n_atoms:
        anchor = r[rng.integers(len(r))]
        direction = rng.standard_normal(3)
        candidate = anchor + bond * rng.uniform(1.0, 1.2) * direction / np.linalg.norm(direction)
        if min(np.linalg.norm(candidate - p) for p in r) >= min_distance:
            r.append(candidate)
    z = rng.choice(np.asarray(species, dtype=np.int64), size=n_atoms)
    return MoleculeConf(z=z, r=np.array(r))
