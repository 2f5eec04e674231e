import numpy as np
import pytest

from geometry import MoleculeConf
from training import Dataset, batches, energy_normalization, split_dataset, synthetic_pes
from training.dataset import infer_target
from training.synthetic import lj_energy_forces


def _confs(n, energy=True):
    confs = []
    for k in range(n):
        r = [[0.0, 0.0, 0.0], [1.0 + 0.01 * k, 0.0, 0.0]]
        confs.append(MoleculeConf(z=[1, 1], r=r, energy=float(k) if energy else None))
    return confs


def test_split_sizes_and_remainder():
    train, val, test = split_dataset(Dataset.from_confs(_confs(3)), (1, 1), seed=0)
    assert (len(train), len(val), len(test)) == (1, 1, 1)


def test_split_is_disjoint_and_exhaustive():
    ds = Dataset.from_confs(_confs(20))
    parts = split_dataset(ds, (12, 5), seed=3)
    ids = [id(c) for part in parts for c in part]
    assert len(ids) == len(set(ids)) == 20


def test_split_is_deterministic_per_seed():
    ds = Dataset.from_confs(_confs(20))
    first = [c.energy for c in split_dataset(ds, (10, 5), seed=1)[0]]
    again = [c.energy for c in split_dataset(ds, (10, 5), seed=1)[0]]
    assert first == again
    trains = {tuple(c.energy for c in split_dataset(ds, (10, 5), seed=s)[0]) for s in (0, 1, 2)}
    assert len(trains) >= 2


def test_split_rejects_oversized_request():
    with pytest.raises(ValueError, match="insufficient data"):
        split_dataset(Dataset.from_confs(_confs(3)), (2, 2), seed=0)


def test_target_inference():
    assert infer_target(_confs(2)) == "pes"
    assert infer_target(_confs(2, energy=False)) == "none"
    mixed = _confs(1) + _confs(1, energy=False)
    with pytest.raises(ValueError):
        infer_target(mixed)
    dipoles = [MoleculeConf(z=[1], r=[[0.0, 0.0, 0.0]], properties={"dipole": 1.0})]
    assert infer_target(dipoles) == "dipole"


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(tuple(_confs(2, energy=False)), target="pes")
    with pytest.raises(ValueError):
        Dataset(tuple(_confs(2)), target="energy")
    ds = Dataset.from_confs(_confs(2))
    assert not ds.has_forces
    with pytest.raises(ValueError):
        ds.forces()
    assert ds.species == (1,)


def test_energy_normalization():
    confs = [
        MoleculeConf(z=[1, 1], r=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], energy=4.0),
        MoleculeConf(z=[1, 1, 1, 1], r=np.eye(4, 3) * 1.5, energy=10.0),
    ]
    norm = energy_normalization(Dataset.from_confs(confs))
    mean = 14.0 / 6.0
    assert norm.per_atom_mean == pytest.approx(mean)
    assert norm.std == pytest.approx(np.std([4.0 - 2 * mean, 10.0 - 4 * mean]))


def test_energy_normalization_falls_back_to_unit_scale():
    confs = [MoleculeConf(z=[1], r=[[0.0, 0.0, 0.0]], energy=-2.0)] * 3
    assert energy_normalization(Dataset.from_confs(confs)).std == 1.0


def test_batches_cover_dataset(rng):
    ds = Dataset.from_confs(_confs(7))
    chunks = batches(ds, 3, rng)
    assert [len(c) for c in chunks] == [3, 3, 1]
    assert sorted(c.energy for chunk in chunks for c in chunk) == list(range(7))
    with pytest.raises(ValueError):
        batches(ds, 0)


def test_lj_forces_match_energy_gradient():
    r = np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.2, 1.4, 0.3]])
    _, forces = lj_energy_forces(r)
    numeric = np.zeros_like(r)
    h = 1e-6
    for i in range(3):
        for c in range(3):
            step = np.zeros_like(r)
            step[i, c] = h
            numeric[i, c] = -(lj_energy_forces(r + step)[0] - lj_energy_forces(r - step)[0]) / (2 * h)
    assert np.allclose(forces, numeric, rtol=1e-6, atol=1e-6)


def test_synthetic_pes():
    ds = synthetic_pes(8, n_atoms=4, seed=2)
    assert len(ds) == 8 and ds.target == "pes" and ds.has_forces
    assert all(c.n_atoms == 4 for c in ds)
    assert ds.species == (1, 6)
    again = synthetic_pes(8, n_atoms=4, seed=2)
    assert np.array_equal(ds.energies(), again.energies())
