"""A Lennard-Jones-like reference surface for desk-scale training runs."""

import logging
from typing import Sequence, Tuple

import numpy as np

from geometry.molecule import MoleculeConf, random_conformation
from training.dataset import Dataset

logger = logging.getLogger(__name__)

SIGMA = 1.3
EPSILON = 1.0
MIN_SEPARATION = 1.0


def lj_energy_forces(r: np.ndarray, sigma: float = SIGMA, epsilon: float = EPSILON) -> Tuple[float, np.ndarray]:
    """Pairwise 4ε((σ/d)¹² - (σ/d)⁶) energy and its analytic forces."""
    r = np.asarray(r, dtype=np.float64)
    diff = r[:, None, :] - r[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    i, j = np.triu_indices(len(r), k=1)
    d = dist[i, j]
    s6 = (sigma / d) ** 6
    energy = float(np.sum(4.0 * epsilon * (s6 * s6 - s6)))
    # dE/dd for every pair
    slope = 4.0 * epsilon * (-12.0 * s6 * s6 + 6.0 * s6) / d
    pair_force = -(slope / d)[:, None] * diff[i, j]
    forces = np.zeros_like(r)
    np.add.at(forces, i, pair_force)
    np.add.at(forces, j, -pair_force)
    return energy, forces


def synthetic_pes(
    n_confs: int,
    n_atoms: int = 4,
    seed: int = 0,
    noise: float = 0.1,
    species: Sequence[int] = (6, 1),
    sigma: float = SIGMA,
    epsilon: float = EPSILON,
) -> Dataset:
    """
    Thermal-like samples around one random reference geometry.

    Args:
        n_confs: number of conformations
        n_atoms: atoms per conformation
        seed: controls the geometry and the displacements
        noise: standard deviation of the Gaussian displacement in Å
        species: atomic numbers assigned cyclically to the atoms

    Returns:
        Dataset with energies (kcal/mol) and forces (kcal/mol/Å)
    """
    if n_confs < 1 or n_atoms < 1:
        raise ValueError("need at least one conformation of at least one atom")
    rng = np.random.default_rng(seed)
    spacing = 2.0 ** (1.0 / 6.0) * sigma
    base = random_conformation(rng, n_atoms, species, bond=spacing, min_distance=0.9 * spacing).r
    z = np.array([species[k % len(species)] for k in range(n_atoms)], dtype=np.int64)
    confs = []
    while len(confs) < n_confs:
        r = base + noise * rng.standard_normal(base.shape)
        if n_atoms > 1:
            diff = r[:, None, :] - r[None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=-1)) + np.eye(n_atoms) * 1e9
            if dist.min() < MIN_SEPARATION:
                continue
        energy, forces = lj_energy_forces(r, sigma, epsilon)
        confs.append(MoleculeConf(z=z, r=r, energy=energy, forces=forces))
    logger.debug("Generated %d synthetic conformations of %d atoms", n_confs, n_atoms)
    return Dataset.from_confs(confs, target="pes", source=f"synthetic(seed={seed})")
