import numpy as np
import pytest

from geometry import MoleculeConf
from model import GNNLF
from training import Dataset, evaluate_mae, predict_dataset
from training.metrics import Metrics, check_compatible, mae


def _relabelled(model, ds):
    """The dataset with the model's own predictions as targets."""
    predictions = predict_dataset(model, ds, with_forces=True)
    forces = predictions.forces_per_conf(list(ds))
    confs = [c.with_targets(energy=float(e), forces=f) for c, e, f in zip(ds, predictions.values, forces)]
    return Dataset.from_confs(confs)


def test_mae_oracle():
    assert mae([1.0, 2.0, 3.0], [1.5, 2.0, 1.0]) == pytest.approx(2.5 / 3.0)
    with pytest.raises(ValueError):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        mae([], [])


def test_model_scored_against_itself_is_exact(tiny_model, lj_data):
    metrics = evaluate_mae(tiny_model, _relabelled(tiny_model, lj_data))
    assert metrics.value_mae <= 1e-9
    assert metrics.force_mae <= 1e-9
    assert metrics.count == len(lj_data)


def test_constant_offset_is_measured(tiny_model, lj_data):
    exact = _relabelled(tiny_model, lj_data)
    shifted = Dataset.from_confs([c.with_targets(energy=c.energy + 2.5, forces=c.forces) for c in exact])
    metrics = evaluate_mae(tiny_model, shifted)
    assert metrics.value_mae == pytest.approx(2.5, rel=1e-9)
    assert metrics.force_mae <= 1e-9


def test_force_mae_is_omitted_without_forces(tiny_model, lj_data):
    energy_only = Dataset.from_confs([c.with_targets(energy=c.energy) for c in lj_data])
    metrics = evaluate_mae(tiny_model, energy_only)
    assert metrics.force_mae is None
    assert set(metrics.to_dict()) == {"target", "count", "energy_mae"}


def test_missing_targets(tiny_model, lj_data):
    bare = Dataset.from_confs([c.with_targets() for c in lj_data])
    with pytest.raises(ValueError, match="missing targets"):
        evaluate_mae(tiny_model, bare)


def test_property_metrics(tiny_config, water):
    ds = Dataset.from_confs([MoleculeConf(z=water.z, r=water.r, properties={"r2": 20.0})])
    with pytest.raises(ValueError):
        check_compatible(GNNLF(tiny_config, seed=0), ds)
    metrics = evaluate_mae(GNNLF(tiny_config.with_updates(target="r2"), seed=0), ds)
    assert metrics.energy_mae is None
    assert set(metrics.to_dict()) == {"target", "count", "r2_mae"}
    assert Metrics("r2", 1.0, None, 1).to_dict()["r2_mae"] == 1.0


def test_threaded_predictions_are_identical(tiny_model, lj_data):
    serial = predict_dataset(tiny_model, lj_data, batch_size=3)
    threaded = predict_dataset(tiny_model, lj_data, batch_size=3, workers=2)
    assert np.array_equal(serial.values, threaded.values)
    assert np.array_equal(serial.forces, threaded.forces)
    with pytest.raises(ValueError):
        predict_dataset(tiny_model, Dataset(()))
