import numpy as np
import pytest

from geometry import (
    MoleculeConf,
    RadialBasis,
    build_neighbor_graph,
    collate,
    cutoff_weight,
    random_conformation,
    random_rotation,
    rbf_expand,
    rbf_init,
)
from tensor_core import Tape, backward, ops
from utils.errors import GeometryError


def test_cutoff_weight_examples():
    assert float(cutoff_weight(0.0, 5.0)) == 1.0
    assert float(cutoff_weight(5.0, 5.0)) == 0.0
    assert float(cutoff_weight(2.5, 5.0)) == pytest.approx(0.5, abs=1e-15)
    assert float(cutoff_weight(7.0, 5.0)) == 0.0


def test_cutoff_weight_is_monotone_and_bounded():
    r = np.linspace(0.0, 6.0, 61)
    w = cutoff_weight(r, 5.0).numpy()
    assert np.all((w >= 0.0) & (w <= 1.0))
    assert np.all(np.diff(w) <= 0.0)


def test_cutoff_weight_slope_vanishes_at_cutoff():
    tape = Tape()
    r = tape.watch(np.array([5.0 - 1e-9]))
    grads = backward(tape, ops.reduce_sum(cutoff_weight(r, 5.0)))
    assert abs(grads[r][0]) < 1e-8


def test_cutoff_weight_rejects_bad_input():
    with pytest.raises(ValueError):
        cutoff_weight(1.0, 0.0)
    with pytest.raises(ValueError):
        cutoff_weight(-0.1, 5.0)


def test_rbf_init_spacing():
    betas, mus = rbf_init(8, 5.0)
    assert mus[0] == pytest.approx(np.exp(-5.0))
    assert mus[-1] == 1.0
    assert np.allclose(np.diff(mus), np.diff(mus)[0])
    assert np.all(betas > 0.0) and np.all(betas == betas[0])
    with pytest.raises(ValueError):
        rbf_init(0, 5.0)


def test_rbf_expand_peaks_at_centres():
    betas, mus = rbf_init(6, 5.0)
    r = -np.log(mus)
    values = rbf_expand(r, betas, mus).numpy()
    assert values.shape == (6, 6)
    assert np.allclose(np.diag(values), 1.0)
    assert np.all((values > 0.0) & (values <= 1.0))
    assert rbf_expand(1.0, betas, mus).shape == (6,)


def test_rbf_expand_validates_widths():
    with pytest.raises(ValueError):
        rbf_expand([1.0], np.array([1.0, -1.0]), np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        rbf_expand([1.0], np.array([1.0]), np.array([0.1, 0.2]))


def test_molecule_validation():
    with pytest.raises(GeometryError):
        MoleculeConf(z=[1, 1], r=np.zeros((3, 3)))
    with pytest.raises(GeometryError):
        MoleculeConf(z=[1, 1], r=[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(GeometryError):
        MoleculeConf(z=[1], r=[[np.nan, 0.0, 0.0]])
    with pytest.raises(GeometryError):
        MoleculeConf(z=[1, 1], r=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], forces=np.zeros((1, 3)))


def test_permuted_and_transformed(water, rotation):
    moved = water.transformed(rotation, [1.0, 2.0, 3.0])
    assert np.allclose(moved.r, water.r @ rotation.T + [1.0, 2.0, 3.0])
    perm = [2, 0, 1]
    swapped = water.permuted(perm)
    assert np.array_equal(swapped.z, water.z[perm])
    assert np.array_equal(swapped.r, water.r[perm])
    with pytest.raises(ValueError):
        water.permuted([0, 0, 1])


def test_random_rotation(rng):
    q = random_rotation(rng)
    assert np.allclose(q @ q.T, np.eye(3), atol=1e-12)
    proper = random_rotation(rng, reflect=False)
    assert np.linalg.det(proper) == pytest.approx(1.0)


def test_random_conformation(rng):
    conf = random_conformation(rng, 12, species=(6, 8))
    assert conf.n_atoms == 12
    assert set(conf.z.tolist()) <= {6, 8}
    diff = conf.r[:, None] - conf.r[None]
    dist = np.linalg.norm(diff, axis=-1) + np.eye(12) * 10.0
    assert dist.min() >= 0.9


def test_graph_edges_are_lexicographic_and_within_cutoff():
    conf = MoleculeConf(z=[6, 1, 1], r=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [7.0, 0.0, 0.0]])
    graph = build_neighbor_graph(conf, 5.0)
    assert graph.pairs() == [(0, 1), (1, 0)]
    assert np.allclose(graph.dist.numpy(), [1.0, 1.0])
    assert np.allclose(graph.unit_dir.numpy(), [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    assert graph.rbf.shape == (2, 32)


def test_graph_of_isolated_atom_is_empty():
    graph = build_neighbor_graph(MoleculeConf(z=[1], r=[[0.0, 0.0, 0.0]]), 5.0)
    assert graph.n_edges == 0
    assert graph.rbf.shape[0] == 0


def test_batched_graph_never_crosses_molecules(water):
    single = build_neighbor_graph(water, 5.0)
    batch = collate([water, water])
    graph = build_neighbor_graph(batch, 5.0)
    assert graph.n_edges == 2 * single.n_edges
    assert np.array_equal(batch.mol_index[graph.center], batch.mol_index[graph.neighbor])
    assert np.array_equal(batch.counts, [3, 3])


def test_graph_rejects_bad_cutoff(water):
    with pytest.raises(ValueError):
        build_neighbor_graph(water, 0.0)


def test_graph_distances_are_differentiable(water):
    tape = Tape()
    positions = tape.watch(water.r)
    graph = build_neighbor_graph(water, 5.0, positions=positions, basis=RadialBasis.initial(4, 5.0))
    grads = backward(tape, ops.reduce_sum(graph.dist))
    # Σ over ordered pairs of |r_i - r_j| has a translation-free gradient
    assert np.allclose(grads[positions].sum(axis=0), 0.0, atol=1e-14)
