"""Neighbor graphs under a cutoff radius."""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from geometry.basis import RadialBasis, cutoff_weight
from geometry.molecule import MIN_DISTANCE, MoleculeBatch, MoleculeConf, as_batch
from tensor_core import Tensor, ops
from utils.errors import GeometryError

logger = logging.getLogger(__name__)

DEFAULT_RBF_COUNT = 32


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Directed edges (i, j) with 0 < r_ij < r_c, ordered lexicographically.

    ``center`` holds i (the atom receiving the message), ``neighbor`` holds j.
    Edge tensors are functions of the positions tensor they were built from,
    so gradients flow back to coordinates.

    Attributes:
        center: int array (E,)
        neighbor: int array (E,)
        dist: Tensor (E,), r_ij in Å
        unit_dir: Tensor (E, 3), (r_j - r_i) / r_ij
        edge_weight: Tensor (E,), cutoff weight in [0, 1]
        rbf: Tensor (E, K)
        n_atoms: number of atoms
        cutoff: r_c used to build the graph
    """

    center: np.ndarray
    neighbor: np.ndarray
    dist: Tensor
    unit_dir: Tensor
    edge_weight: Tensor
    rbf: Tensor
    n_atoms: int
    cutoff: float

    @property
    def n_edges(self) -> int:
        return int(self.center.size)

    def pairs(self):
        return list(zip(self.center.tolist(), self.neighbor.tolist()))


def neighbor_pairs(r: np.ndarray, r_c: float, mol_index: Optional[np.ndarray] = None):
    """Index arrays (i, j) of all ordered pairs closer than r_c within one molecule."""
    r = np.asarray(r, dtype=np.float64)
    diff = r[None, :, :] - r[:, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    n = len(r)
    same = np.ones((n, n), dtype=bool) if mol_index is None else mol_index[:, None] == mol_index[None, :]
    np.fill_diagonal(same, False)
    if np.any(dist[same] <= MIN_DISTANCE):
        raise GeometryError(f"Coincident atoms: a pair is closer than {MIN_DISTANCE} Å")
    # np.nonzero walks row-major, which is lexicographic (i, j) order
    center, neighbor = np.nonzero(same & (dist < r_c))
    return center.astype(np.int64), neighbor.astype(np.int64)


def build_neighbor_graph(
    conf: Union[MoleculeConf, MoleculeBatch],
    r_c: float,
    *,
    positions: Optional[Tensor] = None,
    basis: Optional[RadialBasis] = None,
) -> NeighborGraph:
    """Build the cutoff graph and its edge features.

    Args:
        conf: a conformation or a batch of them; edges never cross molecules
        r_c: cutoff radius in Å
        positions: coordinates tensor to differentiate through; defaults to a
            constant copy of ``conf.r``
        basis: radial basis for the rbf features; defaults to the initial
            32-function basis for ``r_c``

    Returns:
        NeighborGraph with distance, direction, cutoff weight and rbf features

    Raises:
        ValueError: r_c is not positive
        GeometryError: two atoms coincide
    """
    if r_c <= 0:
        raise ValueError(f"cutoff radius must be positive, got {r_c}")
    batch = as_batch(conf)
    if positions is None:
        positions = Tensor(batch.r)
    elif positions.shape != batch.r.shape:
        raise GeometryError(f"positions have shape {positions.shape}, expected {batch.r.shape}")

    center, neighbor = neighbor_pairs(positions.data, r_c, batch.mol_index)
    diff = ops.take(positions, neighbor) - ops.take(positions, center)
    dist = ops.sqrt(ops.reduce_sum(ops.square(diff), axis=-1))
    unit_dir = diff / ops.reshape(dist, (center.size, 1))
    if basis is None:
        basis = RadialBasis.initial(DEFAULT_RBF_COUNT, r_c)
    logger.debug("Built graph with %d atoms and %d edges (r_c=%.2f)", batch.n_atoms, center.size, r_c)
    return NeighborGraph(
        center=center,
        neighbor=neighbor,
        dist=dist,
        unit_dir=unit_dir,
        edge_weight=cutoff_weight(dist, r_c),
        rbf=basis(dist),
        n_atoms=batch.n_atoms,
        cutoff=float(r_c),
    )
