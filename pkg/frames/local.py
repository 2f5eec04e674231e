"""Local frames built by message passing, and the projections onto them.

A frame Ê_i is an F x 3 matrix of O(3)-equivariant row vectors. Frames are
used as produced: rows are neither orthonormalized nor normalized.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from geometry.graph import NeighborGraph
from tensor_core import Tensor, as_tensor, ops
from utils.errors import ShapeError


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Per-atom frames, a tensor of shape (N, F, 3)."""

    matrix: Tensor

    @property
    def n_atoms(self) -> int:
        return self.matrix.shape[0]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def numpy(self) -> np.ndarray:
        return self.matrix.numpy()

    def __getitem__(self, atom: int) -> np.ndarray:
        return self.matrix.data[atom].copy()


@dataclass(frozen=True, eq=False)
class ProjectionFeatures:
    """Per-edge invariant scalars; d2 and d3 are absent when switched off."""

    d1: Tensor
    d2: Optional[Tensor]
    d3: Optional[Tensor]

    def channels(self):
        return [d for d in (self.d1, self.d2, self.d3) if d is not None]


def generate_frames(graph: NeighborGraph, node_scalars, filters) -> FrameSet:
    """Ê_i = Σ_j w_ij (f_ij ⊙ s_j) ∘ r̄_ij / r_ij over incoming edges.

    Args:
        graph: neighbor graph
        node_scalars: (N, F) atom features s_j
        filters: (E, F) edge filters f_ij

    Returns:
        FrameSet; atoms without neighbors get the zero frame
    """
    s = as_tensor(node_scalars)
    f = as_tensor(filters)
    if s.ndim != 2 or s.shape[0] != graph.n_atoms:
        raise ShapeError(f"node scalars must be ({graph.n_atoms}, F), got {s.shape}")
    if f.shape != (graph.n_edges, s.shape[1]):
        raise ShapeError(f"filters must be ({graph.n_edges}, {s.shape[1]}), got {f.shape}")
    width = s.shape[1]
    coef = ops.reshape(graph.edge_weight, (graph.n_edges, 1)) * f * ops.take(s, graph.neighbor)
    spread = ops.matmul(ops.reshape(coef, (graph.n_edges * width, 1)), np.ones((1, 3)))
    rows = ops.reshape(spread, (graph.n_edges, width, 3)) * ops.reshape(graph.unit_dir, (graph.n_edges, 1, 3))
    return FrameSet(ops.segment_sum(rows, graph.center, graph.n_atoms))


def _check_frames(graph: NeighborGraph, frames: FrameSet) -> None:
    if frames.matrix.ndim != 3 or frames.matrix.shape[0] != graph.n_atoms or frames.matrix.shape[2] != 3:
        raise ShapeError(f"frames must be ({graph.n_atoms}, F, 3), got {frames.matrix.shape}")


def _project_direction(graph: NeighborGraph, frames: Tensor, atoms: np.ndarray) -> Tensor:
    picked = ops.take(frames, atoms)
    direction = ops.reshape(graph.unit_dir, (graph.n_edges, 1, 3))
    return ops.reduce_sum(picked * direction, axis=-1)


def project_d1(graph: NeighborGraph, frames: FrameSet) -> Tensor:
    """d¹_ij[k] = ⟨r̄_ij / r_ij, row k of Ê_i⟩, shape (E, F)."""
    _check_frames(graph, frames)
    return _project_direction(graph, frames.matrix, graph.center)


def project_d2(graph: NeighborGraph, frames: FrameSet) -> Tensor:
    """As project_d1, but onto the neighbor's frame Ê_j."""
    _check_frames(graph, frames)
    return _project_direction(graph, frames.matrix, graph.neighbor)


def mix_frames(frames: Tensor, weight) -> Tensor:
    """Apply an F x F matrix to every frame: W · Ê_i for all i."""
    weight = as_tensor(weight)
    n, width, _ = frames.shape
    if weight.shape != (width, width):
        raise ShapeError(f"frame mixing matrix must be ({width}, {width}), got {weight.shape}")
    flat = ops.reshape(ops.transpose(frames, (0, 2, 1)), (n * 3, width))
    mixed = ops.matmul(flat, ops.transpose(weight))
    return ops.transpose(ops.reshape(mixed, (n, 3, width)), (0, 2, 1))


def project_d3(graph: NeighborGraph, frames: FrameSet, w1, w2) -> Tensor:
    """Diagonal frame-frame projection d³_ij[k] = ⟨(W₁Ê_j)_k, (W₂Ê_i)_k⟩, shape (E, F)."""
    _check_frames(graph, frames)
    neighbor_side = ops.take(mix_frames(frames.matrix, w1), graph.neighbor)
    center_side = ops.take(mix_frames(frames.matrix, w2), graph.center)
    return ops.reduce_sum(neighbor_side * center_side, axis=-1)


def project_all(graph: NeighborGraph, frames: FrameSet, w1, w2, use_d2: bool = False, use_d3: bool = True) -> ProjectionFeatures:
    return ProjectionFeatures(
        d1=project_d1(graph, frames),
        d2=project_d2(graph, frames) if use_d2 else None,
        d3=project_d3(graph, frames, w1, w2) if use_d3 else None,
    )


def global_frame(frames: FrameSet, mol_index: Optional[np.ndarray] = None, n_mols: int = 1) -> Tensor:
    """Sum of local frames: (F, 3) for one molecule, (n_mols, F, 3) when ``mol_index`` is given."""
    if mol_index is None:
        return ops.reduce_sum(frames.matrix, axis=0)
    return ops.segment_sum(frames.matrix, mol_index, n_mols)


def broadcast_global_frames(frames: FrameSet, mol_index: np.ndarray, n_mols: int) -> FrameSet:
    """Replace every atom's frame by its molecule's global frame."""
    return FrameSet(ops.take(global_frame(frames, mol_index, n_mols), mol_index))
