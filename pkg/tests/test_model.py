import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit
from scipy.stats import ortho_group

from geometry import MoleculeConf, build_neighbor_graph, collate, random_conformation
from model import GNNLF, ModelConfig, ModelParams, Normalization, load_checkpoint, parameter_shapes, save_checkpoint
from model import network
from model.predict import predict_dipole, predict_energy, predict_forces, predict_r2
from tensor_core import Tape, Tensor, backward, grad_check, ops
from utils.errors import ConfigError, ShapeError, SpeciesError

VARIANTS = {
    "default": {},
    "d2": {"use_d2": True},
    "no-d3": {"use_d3": False},
    "unshared": {"share_filters": False},
    "no-decomp": {"decompose_filters": False},
    "global-frame": {"global_frame_mode": True},
    "schnet": {"schnet_mode": True},
}


def _transform(conf, rng):
    rotation = ortho_group.rvs(3, random_state=rng)
    perm = rng.permutation(conf.n_atoms)
    return rotation, perm, conf.transformed(rotation, rng.normal(scale=3.0, size=3)).permuted(perm)


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_energy_invariance_and_force_equivariance(variant, small_config, rng):
    model = GNNLF(small_config.with_updates(**VARIANTS[variant]), seed=11)
    conf = random_conformation(rng, 8)
    energy, forces = model.energy_and_forces(conf)
    for _ in range(3):
        rotation, perm, moved = _transform(conf, rng)
        other_energy, other_forces = model.energy_and_forces(moved)
        assert abs(other_energy[0] - energy[0]) <= 1e-10 * max(1.0, abs(energy[0]))
        assert np.allclose(other_forces, (forces @ rotation.T)[perm], rtol=0, atol=1e-8 * max(1.0, np.abs(forces).max()))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_atoms=st.integers(2, 10))
def test_invariance_on_random_molecules(seed, n_atoms):
    rng = np.random.default_rng(seed)
    model = GNNLF(ModelConfig(hidden=8, rbf_count=6, layers=2), seed=seed % 97)
    conf = random_conformation(rng, n_atoms)
    _, _, moved = _transform(conf, rng)
    a, b = model.predict_energy(conf), model.predict_energy(moved)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@pytest.mark.parametrize("variant", ["default", "d2", "unshared", "schnet"])
def test_forces_match_finite_differences(variant, small_config, rng):
    model = GNNLF(small_config.with_updates(**VARIANTS[variant]), seed=5)
    conf = random_conformation(rng, 6)
    batch = collate([conf])
    bound = network.bind(model.params)

    def energy(positions):
        return ops.reduce_sum(model.raw_output(batch, positions, bound))

    assert grad_check(energy, conf.r, h=1e-4, reduction="global") <= 1e-5


def test_net_force_vanishes(small_model, rng):
    forces = small_model.predict_forces(random_conformation(rng, 10))
    assert np.abs(forces.sum(axis=0)).max() <= 1e-9 * max(1.0, np.abs(forces).max())


def test_shared_and_unshared_filters_agree_bitwise(small_config, molecule):
    shared = GNNLF(small_config.with_updates(share_filters=True), seed=2)
    unshared_config = small_config.with_updates(share_filters=False)
    tensors = {}
    for name in parameter_shapes(unshared_config):
        source = name
        if name.startswith("layers.") and ".filter." in name:
            source = name.split(".", 2)[2]
        tensors[name] = shared.params[source].copy()
    unshared = GNNLF(unshared_config, ModelParams(unshared_config, tensors))
    assert unshared.predict_energy(molecule) == shared.predict_energy(molecule)
    assert np.allclose(unshared.predict_forces(molecule), shared.predict_forces(molecule), rtol=1e-12, atol=1e-14)
    assert unshared.params.filter_parameter_count() == small_config.layers * shared.params.filter_parameter_count()


def test_schnet_mode_has_no_frame_parameters(small_config):
    shapes = parameter_shapes(small_config.with_updates(schnet_mode=True))
    assert not any(name.startswith("frame.") or ".g2." in name for name in shapes)
    assert small_config.with_updates(schnet_mode=True).projection_channels == 0
    assert small_config.with_updates(use_d2=True).projection_channels == 3


def test_schnet_mode_ignores_directions(small_config):
    """Equal distance multisets around the center give equal SchNet embeddings."""
    model = GNNLF(small_config.with_updates(schnet_mode=True, cutoff=4.0), seed=0)
    bent = []
    for angle in (np.pi / 2.0, 2.0 * np.pi / 3.0):
        r = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0 * np.cos(angle), 3.0 * np.sin(angle), 0.0]]
        bent.append(MoleculeConf(z=[8, 1, 1], r=r))
    assert np.abs(model.embeddings(bent[0]) - model.embeddings(bent[1])).max() <= 1e-12
    local = GNNLF(small_config.with_updates(cutoff=4.0), seed=0)
    assert abs(local.predict_energy(bent[0]) - local.predict_energy(bent[1])) >= 1e-6


def test_energy_is_smooth_across_the_cutoff(small_model):
    cutoff = small_model.config.cutoff
    fixed = [[0.0, 0.0, 0.0], [-1.2, 0.0, 0.0]]
    energies = []
    for d in cutoff + 1e-4 * np.arange(-20, 21):
        energies.append(small_model.predict_energy(MoleculeConf(z=[6, 1, 1], r=fixed + [[d, 0.0, 0.0]])))
    assert np.abs(np.diff(energies)).max() < 1e-6


def test_single_atom_molecule(small_model):
    conf = MoleculeConf(z=[8], r=[[1.0, 2.0, 3.0]])
    energy, forces = small_model.energy_and_forces(conf)
    assert np.isfinite(energy[0])
    assert np.array_equal(forces, np.zeros((1, 3)))


def test_batched_predictions_match_single(small_model, rng):
    confs = [random_conformation(rng, n) for n in (3, 5, 4)]
    batched = small_model.predict(collate(confs))
    single = [small_model.predict_energy(c) for c in confs]
    assert np.allclose(batched, single, rtol=1e-12, atol=1e-12)


def test_unknown_species_is_rejected(small_model):
    with pytest.raises(SpeciesError):
        small_model.predict_energy(MoleculeConf(z=[6, 9], r=[[0.0, 0.0, 0.0], [1.3, 0.0, 0.0]]))


def test_normalization_scales_energy_and_forces(small_config, molecule):
    params = ModelParams.initialize(small_config, seed=4)
    plain = GNNLF(small_config, params)
    scaled = GNNLF(small_config, params, Normalization(per_atom_mean=-2.0, std=3.0))
    energy, forces = plain.energy_and_forces(molecule)
    other_energy, other_forces = scaled.energy_and_forces(molecule)
    assert other_energy[0] == pytest.approx(3.0 * energy[0] - 2.0 * molecule.n_atoms, rel=1e-12)
    assert np.allclose(other_forces, 3.0 * forces, rtol=1e-12, atol=0)


def test_dipole_and_r2_heads(small_config, water, rotation):
    model = GNNLF(small_config.with_updates(target="dipole"), seed=1)
    dipole = predict_dipole(water, model.params)
    assert dipole >= 0.0
    assert predict_dipole(water.transformed(rotation, [4.0, 0.0, -1.0]), model.params) == pytest.approx(dipole, rel=1e-9)

    r2_model = GNNLF(small_config.with_updates(target="r2"), seed=1)
    r2 = predict_r2(water, r2_model.params)
    assert r2 >= 0.0
    assert predict_r2(water.transformed(rotation, [0.0, 2.0, 0.0]), r2_model.params) == pytest.approx(r2, rel=1e-9)
    assert r2_model.predict(water)[0] == pytest.approx(r2, rel=1e-12)


def test_r2_with_explicit_masses(small_config, water):
    model = GNNLF(small_config.with_updates(target="r2"), seed=1)
    masses = {1: 1.008, 8: 15.999}
    assert model.predict_r2(water, masses) == pytest.approx(model.predict_r2(water), rel=1e-3)
    with pytest.raises(SpeciesError):
        model.predict_r2(water, {8: 15.999})


def test_module_level_predictions(small_model, molecule):
    energy = predict_energy(molecule, small_model.params, small_model.config)
    assert energy == small_model.predict_energy(molecule)
    assert np.array_equal(predict_forces(molecule, small_model.params, small_model.config), small_model.predict_forces(molecule))


def test_checkpoint_round_trip(tmp_path, small_config, molecule):
    model = GNNLF(small_config.with_updates(use_d2=True), seed=9, normalization=Normalization(1.5, 2.5))
    path = save_checkpoint(model, tmp_path / "model.npz", extra={"note": "round trip"})
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert loaded.normalization == model.normalization
    assert loaded.predict_energy(molecule) == model.predict_energy(molecule)


def test_config_validation():
    with pytest.raises(ConfigError, match="cutoff"):
        ModelConfig(cutoff=3.0)
    with pytest.raises(ConfigError, match="target"):
        ModelConfig(target="charge")
    with pytest.raises(ConfigError, match="species"):
        ModelConfig(species=(1, 1))
    with pytest.raises(ConfigError, match="hidden"):
        ModelConfig(hidden=0)
    config = ModelConfig(hidden=12)
    assert ModelConfig.from_dict(config.to_dict()) == config


def test_params_validation(small_config):
    params = ModelParams.initialize(small_config, seed=0)
    tensors = dict(params.items())
    tensors["head.energy.bias"] = np.zeros(2)
    with pytest.raises(ShapeError):
        ModelParams(small_config, tensors)
    tensors.pop("head.energy.bias")
    with pytest.raises(ShapeError):
        ModelParams(small_config, tensors)
    other = ModelParams.initialize(small_config, seed=0)
    assert all(np.array_equal(params[n], other[n]) for n in params)


def test_parameter_gradients_are_named(small_model, molecule):
    tape = Tape()
    batch = collate([molecule])
    bound = network.bind(small_model.params, tape)
    out = ops.reduce_sum(small_model.raw_output(batch, Tensor(batch.r), bound))
    named = backward(tape, out).named()
    assert set(named) == set(small_model.params)
    assert np.any(named["head.energy.weight"] != 0.0)


def _with_constants(config, constants, seed=0):
    """A model whose named parameters are filled with constants."""
    tensors = dict(ModelParams.initialize(config, seed=seed).items())
    for name, value in constants.items():
        tensors[name] = np.full(tensors[name].shape, value)
    return GNNLF(config, ModelParams(config, tensors))


def test_energy_is_extensive_over_distant_copies(small_model, molecule):
    far = molecule.r + [100.0, 0.0, 0.0]
    pair = MoleculeConf(z=np.concatenate([molecule.z, molecule.z]), r=np.concatenate([molecule.r, far]))
    assert small_model.predict_energy(pair) == pytest.approx(2.0 * small_model.predict_energy(molecule), rel=1e-10)


def test_message_pass_layer_on_two_atoms():
    conf = MoleculeConf(z=[1, 1], r=[[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]])
    graph = build_neighbor_graph(conf, 5.0)
    assert graph.pairs() == [(0, 1), (1, 0)]
    p = {
        "layers.0.update.0.weight": Tensor([[0.7]]),
        "layers.0.update.0.bias": Tensor([0.1]),
        "layers.0.update.1.weight": Tensor([[-1.3]]),
        "layers.0.update.1.bias": Tensor([0.2]),
    }
    s = np.array([[0.5], [-1.5]])
    filters = np.array([[2.0], [3.0]])
    out = network.message_pass_layer(Tensor(s), graph, Tensor(filters), p, 0).numpy()

    w = 0.5 * (np.cos(np.pi * 1.5 / 5.0) + 1.0)
    aggregate = np.array([w * 2.0 * -1.5, w * 3.0 * 0.5])
    hidden = 0.7 * aggregate + 0.1
    expected = s[:, 0] + (-1.3 * hidden * expit(hidden) + 0.2)
    assert np.allclose(out[:, 0], expected, rtol=1e-12, atol=1e-15)


def test_unit_directional_filter_leaves_the_radial_part(small_config, molecule):
    model = _with_constants(small_config, {"filter.g2.1.weight": 0.0, "filter.g2.1.bias": 1.0})
    batch = collate([molecule])
    p = network.bind(model.params)
    graph = network.neighbor_graph(batch, Tensor(batch.r), p, small_config)
    s0 = network.embed_atoms(batch, graph, p, small_config)
    projections = network.compute_projections(graph, network.compute_frames(batch, graph, s0, p, small_config), p, small_config)
    filters = network.build_filters(graph, projections, p, small_config)
    radial = network.linear(graph.rbf, p, "filter.g1").numpy()
    assert len(filters) == small_config.layers
    for f in filters:
        assert np.array_equal(f.numpy(), radial)


def test_isolated_atoms_keep_their_own_embedding(small_model):
    conf = MoleculeConf(z=[8, 1], r=[[0.0, 0.0, 0.0], [0.0, 0.0, 9.0]])
    kinds = network.species_index(small_model.config, conf.z)
    assert np.array_equal(small_model.embeddings(conf), small_model.params["embedding.atom"][kinds])
    single = MoleculeConf(z=[6], r=[[1.0, 1.0, 1.0]])
    assert np.array_equal(small_model.embeddings(single)[0], small_model.params["embedding.atom"][1])


def test_r2_of_a_homonuclear_pair(small_config):
    model = _with_constants(small_config.with_updates(target="r2"), {"head.r2.weight": 0.0, "head.r2.bias": 1.0})
    pair = MoleculeConf(z=[1, 1], r=[[0.0, 0.0, 0.0], [1.4, 0.0, 0.0]])
    assert model.predict_r2(pair) == pytest.approx(1.4**2 / 2.0, rel=1e-12)


def test_dipole_vanishes_for_uniform_charges(small_config, water):
    uniform = _with_constants(small_config.with_updates(target="dipole"), {"head.dipole.weight": 0.0, "head.dipole.bias": 0.5})
    assert uniform.predict_dipole(water) == pytest.approx(0.0, abs=1e-12)
    model = GNNLF(small_config.with_updates(target="dipole"), seed=2)
    assert model.predict_dipole(MoleculeConf(z=[8], r=[[1.0, -2.0, 0.5]])) == 0.0
