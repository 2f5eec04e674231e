from model.config import ModelConfig
from model.params import ModelParams, parameter_shapes
from model.predict import (
    GNNLF,
    Normalization,
    load_checkpoint,
    predict_dipole,
    predict_energy,
    predict_forces,
    predict_r2,
    save_checkpoint,
)
