import numpy as np
import pytest
from scipy.stats import ortho_group

from geometry.molecule import MoleculeConf, random_conformation
from model.config import ModelConfig
from model.predict import GNNLF
from training.synthetic import synthetic_pes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return ModelConfig(hidden=16, rbf_count=8, layers=2, cutoff=5.0)


@pytest.fixture
def tiny_config():
    return ModelConfig(hidden=8, rbf_count=4, layers=1, cutoff=5.0)


@pytest.fixture
def small_model(small_config):
    return GNNLF(small_config, seed=7)


@pytest.fixture
def tiny_model(tiny_config):
    return GNNLF(tiny_config, seed=3)


@pytest.fixture
def molecule(rng):
    return random_conformation(rng, 7)


@pytest.fixture
def rotation(rng):
    return ortho_group.rvs(3, random_state=rng)


@pytest.fixture
def water():
    r = np.array([[0.0, 0.0, 0.0], [0.96, 0.0, 0.0], [-0.24, 0.93, 0.0]])
    return MoleculeConf(z=[8, 1, 1], r=r)


@pytest.fixture
def lj_data():
    """Twelve 3-atom conformations with energies and forces."""
    return synthetic_pes(12, n_atoms=3, seed=0)
