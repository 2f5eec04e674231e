"""Forward pass of the local-frame network.

Pipeline: neighbor graph -> neighborhood embedding -> local frames ->
projections (d¹, d², d³) -> edge filters -> residual message passing layers ->
per-atom features consumed by the output heads.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from ase.data import atomic_masses

from frames.local import FrameSet, ProjectionFeatures, broadcast_global_frames, generate_frames, project_all
from geometry.basis import RadialBasis
from geometry.graph import NeighborGraph, build_neighbor_graph
from geometry.molecule import MoleculeBatch
from model.config import ModelConfig
from model.params import ModelParams, filter_prefix
from tensor_core import Tape, Tensor, ops
from utils.errors import ShapeError, SpeciesError

logger = logging.getLogger(__name__)

Bound = Dict[str, Tensor]


def bind(params: ModelParams, tape: Optional[Tape] = None) -> Bound:
    """Tensors for every parameter; watched on ``tape`` when given."""
    if tape is None:
        return {name: Tensor(array, name=name) for name, array in params.items()}
    return {name: tape.watch(array, name=name) for name, array in params.items()}


def species_index(config: ModelConfig, z: np.ndarray) -> np.ndarray:
    lookup = {number: k for k, number in enumerate(config.species)}
    try:
        return np.array([lookup[int(number)] for number in z], dtype=np.int64)
    except KeyError as e:
        raise SpeciesError(f"atomic number {e.args[0]} is not in the model's species table {config.species}")


def linear(x: Tensor, p: Bound, prefix: str) -> Tensor:
    return ops.matmul(x, p[f"{prefix}.weight"]) + p[f"{prefix}.bias"]


def mlp(x: Tensor, p: Bound, prefix: str) -> Tensor:
    """Two linear layers with a SiLU between them."""
    return linear(ops.silu(linear(x, p, f"{prefix}.0")), p, f"{prefix}.1")


def _column(x: Tensor) -> Tensor:
    return ops.reshape(x, (x.shape[0], 1))


def neighbor_graph(batch: MoleculeBatch, positions: Tensor, p: Bound, config: ModelConfig) -> NeighborGraph:
    basis = RadialBasis(p["rbf.betas"], p["rbf.mus"])
    return build_neighbor_graph(batch, config.cutoff, positions=positions, basis=basis)


def embed_atoms(batch: MoleculeBatch, graph: NeighborGraph, p: Bound, config: ModelConfig) -> Tensor:
    """s_i⁽⁰⁾ = Emb₁(z_i) + Σ_j w_ij Emb₂(z_j) ⊙ f(rbf_ij).

    The neighbor sum carries the cutoff weight so the embedding stays smooth
    as atoms cross the cutoff sphere.
    """
    kinds = species_index(config, batch.z)
    own = ops.take(p["embedding.atom"], kinds)
    neighbor_kinds = kinds[graph.neighbor]
    edge_filter = linear(graph.rbf, p, "embedding.filter")
    messages = _column(graph.edge_weight) * ops.take(p["embedding.neighbor"], neighbor_kinds) * edge_filter
    return own + ops.segment_sum(messages, graph.center, graph.n_atoms)


def compute_frames(batch: MoleculeBatch, graph: NeighborGraph, s0: Tensor, p: Bound, config: ModelConfig) -> FrameSet:
    frames = generate_frames(graph, s0, linear(graph.rbf, p, "frame.filter"))
    if config.global_frame_mode:
        frames = broadcast_global_frames(frames, batch.mol_index, batch.n_mols)
    return frames


def compute_projections(graph: NeighborGraph, frames: FrameSet, p: Bound, config: ModelConfig) -> ProjectionFeatures:
    return project_all(
        graph,
        frames,
        p.get("frame.w1"),
        p.get("frame.w2"),
        use_d2=config.use_d2,
        use_d3=config.use_d3,
    )


def build_filters(
    graph: NeighborGraph, projections: Optional[ProjectionFeatures], p: Bound, config: ModelConfig
) -> List[Tensor]:
    """Edge filters for each layer, shape (E, F) each.

    In schnet_mode the filter is g₁(rbf) alone. Otherwise it is
    g₁(rbf) ⊙ g₂(d¹, d², d³), or one MLP over [rbf, d¹, d², d³] when
    decompose_filters is off. With share_filters the same tensor serves all layers.
    """
    if not config.schnet_mode and projections is None:
        raise ShapeError("projections are required unless schnet_mode is on")
    filters = []
    for layer in range(config.filter_sets):
        prefix = filter_prefix(config, layer)
        if config.schnet_mode:
            filters.append(linear(graph.rbf, p, f"{prefix}.g1"))
            continue
        channels = projections.channels()
        if len(channels) != config.projection_channels:
            raise ShapeError(f"expected {config.projection_channels} projection channels, got {len(channels)}")
        if config.decompose_filters:
            directional = mlp(ops.concat(channels, axis=-1), p, f"{prefix}.g2")
            filters.append(linear(graph.rbf, p, f"{prefix}.g1") * directional)
        else:
            filters.append(mlp(ops.concat([graph.rbf] + channels, axis=-1), p, f"{prefix}.g2"))
    if config.share_filters:
        return filters * config.layers
    return filters


def message_pass_layer(s: Tensor, graph: NeighborGraph, filters: Tensor, p: Bound, layer: int) -> Tensor:
    """a_i = Σ_j w_ij (f_ij ⊙ s_j); s_i ← s_i + MLP_l(a_i)."""
    messages = _column(graph.edge_weight) * filters * ops.take(s, graph.neighbor)
    aggregate = ops.segment_sum(messages, graph.center, graph.n_atoms)
    return s + mlp(aggregate, p, f"layers.{layer}.update")


@dataclass(frozen=True, eq=False)
class ForwardState:
    graph: NeighborGraph
    embedding: Tensor
    frames: Optional[FrameSet]
    projections: Optional[ProjectionFeatures]
    features: Tensor


def forward(batch: MoleculeBatch, positions: Tensor, p: Bound, config: ModelConfig) -> ForwardState:
    graph = neighbor_graph(batch, positions, p, config)
    s = embed_atoms(batch, graph, p, config)
    embedding = s
    frames = projections = None
    if config.uses_frames:
        frames = compute_frames(batch, graph, s, p, config)
        projections = compute_projections(graph, frames, p, config)
    filters = build_filters(graph, projections, p, config)
    for layer in range(config.layers):
        s = message_pass_layer(s, graph, filters[layer], p, layer)
    return ForwardState(graph=graph, embedding=embedding, frames=frames, projections=projections, features=s)


def energy_head(batch: MoleculeBatch, features: Tensor, p: Bound, config: ModelConfig) -> Tensor:
    """Per-molecule energy: sum pooling of a per-atom linear readout."""
    atomic = ops.reshape(linear(features, p, "head.energy"), (batch.n_atoms,))
    if config.species_offset:
        atomic = atomic + ops.take(p["head.species_offset"], species_index(config, batch.z))
    return ops.segment_sum(atomic, batch.mol_index, batch.n_mols)


def dipole_head(batch: MoleculeBatch, positions: Tensor, features: Tensor, p: Bound) -> Tensor:
    """|Σ_i (q_i - mean_j q_j) r_i| per molecule, with charges from a linear head."""
    charges = ops.reshape(linear(features, p, "head.dipole"), (batch.n_atoms,))
    counts = batch.counts.astype(np.float64)
    mean = ops.segment_sum(charges, batch.mol_index, batch.n_mols) / counts
    centered = charges - ops.take(mean, batch.mol_index)
    moment = ops.segment_sum(_column(centered) * positions, batch.mol_index, batch.n_mols)
    return ops.sqrt(ops.reduce_sum(ops.square(moment), axis=-1))


def atom_masses(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.size and (z.min() < 1 or z.max() >= len(atomic_masses)):
        raise SpeciesError(f"no atomic mass known for atomic numbers {sorted(set(z.tolist()))}")
    return np.asarray(atomic_masses)[z]


def r2_head(batch: MoleculeBatch, positions: Tensor, features: Tensor, p: Bound, masses: Optional[np.ndarray] = None) -> Tensor:
    """|Σ_i x_i |r_i - r_com|²| per molecule, with x_i from a linear head."""
    if masses is None:
        masses = atom_masses(batch.z)
    masses = np.asarray(masses, dtype=np.float64)
    if masses.shape != (batch.n_atoms,) or np.any(masses <= 0):
        raise SpeciesError("atom masses must be positive, one per atom")
    total = np.bincount(batch.mol_index, weights=masses, minlength=batch.n_mols)
    center = ops.segment_sum(_column(masses) * positions, batch.mol_index, batch.n_mols) / _column(total)
    offset = positions - ops.take(center, batch.mol_index)
    weights = ops.reshape(linear(features, p, "head.r2"), (batch.n_atoms,))
    spread = ops.segment_sum(weights * ops.reduce_sum(ops.square(offset), axis=-1), batch.mol_index, batch.n_mols)
    return ops.abs_(spread)
