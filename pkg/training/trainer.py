"""Mini-batch training with Adam, plateau scheduling and early stopping.

Energies are learned in normalized units ê = (E - n_atoms·mean) / std. The
energy/force loss needs the gradient of the force residual with respect to the
parameters, a mixed second derivative. The tape is first-order only, so that
term is taken as a central difference of first-order parameter gradients along
the force-residual direction.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.molecule import MoleculeBatch, MoleculeConf, collate
from model import network
from model.predict import GNNLF
from tensor_core import Tape, backward, ops
from training.dataset import MODEL_TARGET, Dataset, batches, energy_normalization
from training.loss import DEFAULT_RHO, pes_loss_and_grad, property_loss_and_grad
from training.metrics import Metrics, check_compatible, evaluate_mae
from training.optim import AdamState, PlateauScheduler, adam_step
from utils.errors import ConfigError, NonFiniteError, TrainingAborted

logger = logging.getLogger(__name__)

FD_STEP = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization settings.

    Attributes:
        lr: initial learning rate
        batch_size: molecules per step
        max_epochs: epoch budget
        patience: epochs without validation improvement before stopping
        rho: force share of the energy/force loss
        seed: shuffling seed
        workers: threads evaluating sub-batches; 1 is bitwise reproducible
        sched_factor: plateau reduction factor
        sched_patience: evaluations without improvement before a reduction
        min_lr: learning-rate floor
        fd_step: displacement (Å) for the force-term parameter gradient
    """

    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 6000
    patience: int = 500
    rho: float = DEFAULT_RHO
    seed: int = 0
    workers: int = 1
    sched_factor: float = 0.8
    sched_patience: int = 30
    min_lr: float = 1e-6
    fd_step: float = FD_STEP

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.lr < 0 or not np.isfinite(self.lr):
            raise ConfigError("lr", f"must be a non-negative number, got {self.lr}")
        for name in ("batch_size", "max_epochs", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be at least 1, got {getattr(self, name)}")
        for name in ("patience", "sched_patience"):
            if getattr(self, name) < 0:
                raise ConfigError(name, f"must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho", f"must lie in [0, 1], got {self.rho}")
        if not 0.0 < self.sched_factor < 1.0:
            raise ConfigError("sched_factor", f"must lie in (0, 1), got {self.sched_factor}")
        if self.min_lr < 0:
            raise ConfigError("min_lr", f"must be non-negative, got {self.min_lr}")
        if self.fd_step <= 0:
            raise ConfigError("fd_step", f"must be positive, got {self.fd_step}")

    @classmethod
    def for_target(cls, target: str, **changes) -> "TrainConfig":
        """Protocol defaults: energy/force surfaces vs. scalar molecular properties."""
        if target in ("pes", "energy"):
            base = cls()
        else:
            base = cls(lr=3e-4, batch_size=64, max_epochs=1000, patience=50, rho=0.0)
        return replace(base, **changes)

    def with_updates(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown training setting")
        return cls(**data)


@dataclass
class TrainResult:
    """
    Outcome of a training run.

    Attributes:
        model: model with the best validation parameters
        history: one row per epoch (epoch, train_loss, val_mae, lr and the MAE parts)
        metadata: normalization, best epoch and stop reason
    """

    model: GNNLF
    history: List[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def best_epoch(self) -> Optional[int]:
        return self.metadata.get("best_epoch")


# Gradients


@dataclass(eq=False)
class _Pass:
    batch: MoleculeBatch
    tape: Tape
    raw: object
    forces: Optional[np.ndarray]


def _forward(model: GNNLF, confs: Sequence[MoleculeConf], with_forces: bool) -> _Pass:
    batch = collate(confs)
    tape = Tape()
    positions = tape.watch(batch.r, name="positions")
    bound = network.bind(model.params, tape)
    raw = model.raw_output(batch, positions, bound)
    forces = None
    if with_forces:
        forces = -backward(tape, ops.reduce_sum(raw))[positions]
    return _Pass(batch=batch, tape=tape, raw=raw, forces=forces)


def _param_gradients(tape: Tape, output, names: Sequence[str]) -> Dict[str, np.ndarray]:
    named = backward(tape, output).named()
    return {name: named[name] for name in names}


def _energy_param_gradients(model: GNNLF, batch: MoleculeBatch, positions: np.ndarray) -> Dict[str, np.ndarray]:
    """∇θ Σ_b ê_b at the given coordinates."""
    tape = Tape()
    bound = network.bind(model.params, tape)
    raw = model.raw_output(batch, tape.watch(positions, name="positions"), bound)
    return _param_gradients(tape, ops.reduce_sum(raw), list(model.params))


def _sub_batch_gradients(
    model: GNNLF, state: _Pass, d_values: np.ndarray, d_forces: Optional[np.ndarray], fd_step: float
) -> Dict[str, np.ndarray]:
    names = list(model.params)
    weights = ops.constant(d_values)
    grads = _param_gradients(state.tape, ops.reduce_sum(state.raw * weights), names)
    if d_forces is None:
        return grads
    norm = float(np.sqrt(np.sum(d_forces * d_forces)))
    if norm == 0.0:
        return grads
    # Force term: Σ_a v_a·∂F_a/∂θ = -D_v ∇θ Σ ê with v = dL/dF.
    direction = d_forces / norm
    plus = _energy_param_gradients(model, state.batch, state.batch.r + fd_step * direction)
    minus = _energy_param_gradients(model, state.batch, state.batch.r - fd_step * direction)
    scale = norm / (2.0 * fd_step)
    for name in names:
        grads[name] = grads[name] - scale * (plus[name] - minus[name])
    return grads


def _split(confs: Sequence[MoleculeConf], parts: int) -> List[List[MoleculeConf]]:
    parts = max(1, min(parts, len(confs)))
    bounds = np.linspace(0, len(confs), parts + 1).astype(int)
    return [list(confs[bounds[k] : bounds[k + 1]]) for k in range(parts)]


def _map(workers: int, fn: Callable, items: Sequence) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def normalized_targets(model: GNNLF, confs: Sequence[MoleculeConf], target: str):
    """Targets in the model's raw output units: (values, forces or None)."""
    if target != "pes":
        return np.array([c.properties[target] for c in confs], dtype=np.float64), None
    norm = model.normalization
    counts = np.array([c.n_atoms for c in confs], dtype=np.float64)
    energies = np.array([c.energy for c in confs], dtype=np.float64)
    values = (energies - norm.per_atom_mean * counts) / norm.std
    forces = None
    if confs[0].forces is not None:
        forces = np.concatenate([c.forces for c in confs]) / norm.std
    return values, forces


def loss_and_gradients(
    model: GNNLF,
    confs: Sequence[MoleculeConf],
    target: str = "pes",
    rho: float = DEFAULT_RHO,
    workers: int = 1,
    fd_step: float = FD_STEP,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Batch loss in normalized units and its gradient for every parameter.

    Sub-batches are evaluated by ``workers`` threads; their gradients are
    summed in sub-batch order.
    """
    if not confs:
        raise ValueError("empty batch")
    target_values, target_forces = normalized_targets(model, confs, target)
    use_forces = target == "pes" and rho > 0.0
    if use_forces and target_forces is None:
        raise ValueError("missing force targets; set rho to 0 to train on energies only")

    parts = _split(confs, workers)
    states = _map(workers, lambda part: _forward(model, part, use_forces), parts)
    values = np.concatenate([s.raw.numpy() for s in states])
    if target == "pes":
        forces = np.concatenate([s.forces for s in states]) if use_forces else None
        loss, d_values, d_forces = pes_loss_and_grad(values, forces, target_values, target_forces, rho)
    else:
        loss, d_values = property_loss_and_grad(values, target_values)
        d_forces = None

    jobs = []
    mol_start = atom_start = 0
    for state in states:
        mol_stop = mol_start + state.batch.n_mols
        atom_stop = atom_start + state.batch.n_atoms
        jobs.append(
            (state, d_values[mol_start:mol_stop], None if d_forces is None else d_forces[atom_start:atom_stop])
        )
        mol_start, atom_start = mol_stop, atom_stop
    parts_grads = _map(workers, lambda job: _sub_batch_gradients(model, *job, fd_step), jobs)

    grads = parts_grads[0]
    for extra in parts_grads[1:]:
        grads = {name: grads[name] + extra[name] for name in grads}
    return loss, grads


# Training loop


def _validation_score(metrics: Metrics, rho: float) -> float:
    if metrics.force_mae is None:
        return metrics.value_mae
    return (1.0 - rho) * metrics.value_mae + rho * metrics.force_mae


def _finite(grads: Dict[str, np.ndarray]) -> bool:
    return all(np.all(np.isfinite(g)) for g in grads.values())


def train(model: GNNLF, train_set: Dataset, val_set: Dataset, cfg: TrainConfig) -> TrainResult:
    """
    Fit ``model`` on ``train_set``, keeping the parameters with the best validation score.

    The validation score is the MAE of the target; with forces it is the
    ρ-weighted mix of energy and force MAE. The learning rate follows a
    reduce-on-plateau schedule on that score, and training stops after
    ``cfg.patience`` epochs without improvement.

    Raises:
        ValueError: empty or incompatible datasets
        TrainingAborted: the loss or a gradient became non-finite; carries the best
            parameters seen so far and the history
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_set.target != val_set.target or train_set.target not in MODEL_TARGET:
        raise ValueError(f"cannot train on target kinds {train_set.target!r}/{val_set.target!r}")
    target = train_set.target
    rho = cfg.rho if train_set.has_forces else 0.0
    if target == "pes":
        model = GNNLF(model.config, model.params, energy_normalization(train_set))
    check_compatible(model, train_set)

    rng = np.random.default_rng(cfg.seed)
    params = dict(model.params.items())
    adam = AdamState.zeros_like(params)
    scheduler = PlateauScheduler(cfg.lr, cfg.sched_factor, cfg.sched_patience, cfg.min_lr)
    best_params, best_score, best_epoch = model.params.copy(), float("inf"), None
    history: List[dict] = []
    stale = 0
    stop_reason = "max_epochs"
    metadata = {
        "target": target,
        "normalization": model.normalization.to_dict(),
        "normalized_energies": target == "pes",
        "rho": rho,
    }
    logger.info(
        "Training on %d conformations (validation %d), %d parameters",
        len(train_set),
        len(val_set),
        model.params.parameter_count(),
    )

    def abort(message: str):
        logger.error("%s; keeping parameters from epoch %s", message, best_epoch)
        metadata.update(best_epoch=best_epoch, stop_reason="non_finite")
        raise TrainingAborted(message, params=best_params, history=history)

    for epoch in range(1, cfg.max_epochs + 1):
        weighted, seen = 0.0, 0
        for chunk in batches(train_set, cfg.batch_size, rng):
            try:
                loss, grads = loss_and_gradients(model, chunk, target, rho, cfg.workers, cfg.fd_step)
            except (NonFiniteError, FloatingPointError) as e:
                abort(f"epoch {epoch}: {e}")
            if not np.isfinite(loss) or not _finite(grads):
                abort(f"epoch {epoch}: non-finite loss {loss}")
            params, adam = adam_step(params, grads, adam, scheduler.lr)
            model = model.with_params(model.params.replaced(params))
            weighted += loss * len(chunk)
            seen += len(chunk)

        try:
            metrics = evaluate_mae(model, val_set, batch_size=max(cfg.batch_size, 64), workers=cfg.workers)
        except (NonFiniteError, FloatingPointError) as e:
            abort(f"epoch {epoch}: validation failed: {e}")
        score = _validation_score(metrics, rho)
        if not np.isfinite(score):
            abort(f"epoch {epoch}: non-finite validation score")
        row = {"epoch": epoch, "train_loss": weighted / seen, "val_mae": score, "lr": scheduler.lr}
        row.update({f"val_{k}": v for k, v in metrics.to_dict().items() if k.endswith("_mae")})
        history.append(row)
        logger.info("epoch %d  train_loss %.6g  val_mae %.6g  lr %.3g", epoch, row["train_loss"], score, row["lr"])

        if score < best_score:
            best_score, best_epoch, best_params, stale = score, epoch, model.params.copy(), 0
        else:
            stale += 1
        scheduler.step(score)
        if stale >= cfg.patience:
            stop_reason = "early_stop"
            logger.info("Early stopping at epoch %d; best epoch %d (val_mae %.6g)", epoch, best_epoch, best_score)
            break

    metadata.update(best_epoch=best_epoch, best_val_mae=best_score, epochs=len(history), stop_reason=stop_reason)
    return TrainResult(model=model.with_params(best_params), history=history, metadata=metadata)
