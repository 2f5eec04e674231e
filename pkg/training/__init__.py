from training.dataset import Dataset, batches, energy_normalization, split_dataset
from training.extxyz import load_extxyz, write_extxyz
from training.loss import loss_pes, loss_property
from training.metrics import Metrics, evaluate_mae, predict_dataset
from training.optim import AdamState, PlateauScheduler, adam_step, plateau_scheduler
from training.synthetic import lj_energy_forces, synthetic_pes
from training.trainer import TrainConfig, TrainResult, loss_and_gradients, train
