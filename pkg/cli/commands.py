"""The train, eval, predict and verify commands.

Each command takes a validated RunConfig, prints a short human-readable
summary and returns a process exit code.
"""

import json
import logging
import time
from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pandas as pd

from cli.run_config import RunConfig
from geometry.molecule import collate
from model.predict import GNNLF
from training.dataset import MODEL_TARGET, Dataset, energy_normalization, split_dataset
from training.extxyz import load_extxyz, write_extxyz
from training.metrics import evaluate_mae, predict_dataset
from training.trainer import TrainResult, train
from utils.errors import SpeciesError, TrainingAborted
from verification.suites import VerifyOptions, run_suites

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def check_species(model: GNNLF, ds: Dataset) -> None:
    unseen = sorted(set(ds.species) - set(model.config.species))
    if unseen:
        raise SpeciesError(
            f"atomic numbers {unseen} in {ds.source or 'the data'} are not in the model's species table "
            f"{list(model.config.species)}"
        )


def split_sizes(n: int, train_size: int, val_size: int):
    """Explicit sizes, or 80% / 10% of the data with at least one validation conformation."""
    if val_size == 0:
        val_size = max(1, int(round(0.1 * n)))
    if train_size == 0:
        train_size = max(1, min(n - val_size, int(round(0.8 * n))))
    return train_size, val_size


def write_history(path: Path, history) -> Path:
    """One JSON object per epoch."""
    pd.DataFrame(history).to_json(path, orient="records", lines=True, double_precision=15)
    return path


def _summary_lines(result: TrainResult, test_metrics) -> list:
    meta = result.metadata
    lines = [
        f"best epoch: {meta.get('best_epoch')} of {meta.get('epochs')} ({meta.get('stop_reason')})",
        f"best validation MAE: {meta.get('best_val_mae'):.6g}",
        f"parameters: {result.model.params.parameter_count()}",
    ]
    if meta.get("normalized_energies"):
        norm = meta["normalization"]
        lines.append(f"energy normalization: per-atom mean {norm['per_atom_mean']:.6g}, std {norm['std']:.6g}")
    if test_metrics is not None:
        lines += [f"test {key}: {value:.6g}" for key, value in test_metrics.to_dict().items() if key.endswith("_mae")]
    return lines


def cmd_train(config: RunConfig) -> int:
    """Train on the data file; write the checkpoint, history.jsonl and summary.txt."""
    ds = load_extxyz(config.paths.data)
    if ds.target not in MODEL_TARGET:
        raise ValueError(f"{config.paths.data} has no energies or properties to train on")
    if MODEL_TARGET[ds.target] != config.model.target:
        raise ValueError(
            f"model target {config.model.target!r} does not match the data ({ds.target!r}); set --target"
        )
    model = GNNLF(config.model, seed=config.train.seed)
    check_species(model, ds)

    sizes = split_sizes(len(ds), config.run.train_size, config.run.val_size)
    train_set, val_set, test_set = split_dataset(ds, sizes, seed=config.train.seed)
    output_dir = Path(config.paths.output_dir)
    history_path = output_dir / "history.jsonl"
    print(f"🔧 Training on {len(train_set)} conformations ({len(val_set)} validation, {len(test_set)} test)")

    try:
        result = train(model, train_set, val_set, config.train)
    except TrainingAborted as e:
        if e.params is not None:
            normalization = energy_normalization(train_set) if ds.target == "pes" else None
            GNNLF(model.config, e.params, normalization).save(config.checkpoint_path, extra={"aborted": str(e)})
        write_history(history_path, e.history or [])
        print(f"❌ Training aborted: {e}")
        print(f"   Last good parameters saved to {config.checkpoint_path}")
        raise

    test_metrics = None
    if len(test_set):
        test_metrics = evaluate_mae(result.model, test_set, workers=config.train.workers)
    extra = {"train": result.metadata, "run": {k: str(v) for k, v in config.sections()["run"].items()}}
    result.model.save(config.checkpoint_path, extra=extra)
    write_history(history_path, result.history)

    lines = _summary_lines(result, test_metrics)
    (output_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("✅ Training finished")
    for line in lines:
        print(f"   {line}")
    print(f"   checkpoint: {config.checkpoint_path}")
    print(f"   history: {history_path}")
    return EXIT_OK


def inference_ms_per_molecule(model: GNNLF, ds: Dataset, batch_size: int, n_batches: int, seed: int = 0) -> float:
    """Mean wall-clock prediction time per molecule over random batches, in ms."""
    rng = np.random.default_rng(seed)
    elapsed, molecules = 0.0, 0
    for _ in range(max(1, n_batches)):
        picked = rng.choice(len(ds), size=min(batch_size, len(ds)), replace=False)
        batch = collate([ds[int(k)] for k in picked])
        start = time.perf_counter()
        model.predict(batch)
        elapsed += time.perf_counter() - start
        molecules += batch.n_mols
    return 1000.0 * elapsed / molecules


def cmd_eval(config: RunConfig) -> int:
    """Print MAE and inference time of a checkpoint on a data file; write metrics.json."""
    model = GNNLF.load(config.paths.checkpoint)
    ds = load_extxyz(config.paths.data)
    if len(ds) == 0:
        raise ValueError(f"{config.paths.data} contains no frames")
    check_species(model, ds)
    metrics = evaluate_mae(model, ds, batch_size=config.train.batch_size, workers=config.train.workers)
    timing = inference_ms_per_molecule(model, ds, config.train.batch_size, config.run.eval_batches, config.train.seed)

    report = {**metrics.to_dict(), "ms_per_molecule": timing}
    path = Path(config.paths.output_dir) / "metrics.json"
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

    print(f"📊 Evaluated {metrics.count} conformations from {config.paths.data}")
    for key, value in report.items():
        if key.endswith("_mae"):
            print(f"   {key}: {value:.6g}")
    print(f"   inference: {timing:.3f} ms per molecule")
    print(f"   metrics: {path}")
    return EXIT_OK


def cmd_predict(config: RunConfig) -> int:
    """Attach predicted energies and forces (or properties) to every input frame."""
    model = GNNLF.load(config.paths.checkpoint)
    ds = load_extxyz(config.paths.input)
    if len(ds) == 0:
        raise ValueError(f"{config.paths.input} contains no frames; nothing written")
    check_species(model, ds)
    predictions = predict_dataset(model, ds, batch_size=config.train.batch_size, workers=config.train.workers)

    output = config.output_path
    if model.config.target == "energy":
        write_extxyz(output, ds.confs, energies=predictions.values, forces=predictions.forces_per_conf(ds.confs))
    else:
        write_extxyz(output, ds.confs, properties={model.config.target: predictions.values})
    print(f"✅ Wrote {len(ds)} predicted frame(s) to {output}")
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    """Run the verification suites on a checkpoint or a randomly initialized model."""
    if config.paths.checkpoint is not None:
        model = GNNLF.load(config.paths.checkpoint)
        source = str(config.paths.checkpoint)
    else:
        model = GNNLF(config.model, seed=config.train.seed)
        source = f"random weights (seed {config.train.seed})"
    options = VerifyOptions(
        n_confs=config.run.verify_confs,
        n_transforms=config.run.verify_transforms,
        seed=config.train.seed,
    )
    report = run_suites(model, config.run.suite, options)

    path = Path(config.paths.output_dir) / "verify.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, default=float) + "\n", encoding="utf-8")

    print(f"🔍 Verifying {source}")
    for result in report.results:
        mark = "✅" if result.passed else "❌"
        print(f"  {mark} {result.name}: worst {result.worst:.3g} of tolerance ({result.checks} checks, {result.seconds:.1f}s)")
    print(f"   report: {path}")
    if not report.passed:
        failed = [r.name for r in report.results if not r.passed]
        print(f"⚠️  {len(failed)} suite(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print("🎉 All suites passed")
    return EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "verify": cmd_verify,
}


def run_command(config: RunConfig) -> int:
    return COMMAND_HANDLERS[config.command](config)
