"""Run configuration: built-in defaults, then the config file, then command-line overrides."""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from model.config import ModelConfig
from training.trainer import TrainConfig
from utils.config_parser import coerce_value, format_config, load_config_file
from utils.errors import ConfigError
from utils.settings import default_output_dir, default_workers
from verification.suites import parse_suites

logger = logging.getLogger(__name__)

COMMANDS = ("train", "eval", "predict", "verify")

# Declared type of every settable key, by section
FIELD_TYPES: Dict[str, Dict[str, str]] = {
    "model": {
        "hidden": "INT",
        "rbf_count": "INT",
        "layers": "INT",
        "cutoff": "FLOAT",
        "use_d2": "BOOL",
        "use_d3": "BOOL",
        "share_filters": "BOOL",
        "schnet_mode": "BOOL",
        "global_frame_mode": "BOOL",
        "decompose_filters": "BOOL",
        "species_offset": "BOOL",
        "species": "INTS",
        "target": "STR",
    },
    "train": {
        "lr": "FLOAT",
        "batch_size": "INT",
        "max_epochs": "INT",
        "patience": "INT",
        "rho": "FLOAT",
        "seed": "INT",
        "workers": "INT",
        "sched_factor": "FLOAT",
        "sched_patience": "INT",
        "min_lr": "FLOAT",
        "fd_step": "FLOAT",
    },
    "paths": {
        "data": "PATH",
        "checkpoint": "PATH",
        "output_dir": "PATH",
        "input": "PATH",
        "output": "PATH",
    },
    "run": {
        "train_size": "INT",
        "val_size": "INT",
        "suite": "STR",
        "long_run": "BOOL",
        "verify_confs": "INT",
        "verify_transforms": "INT",
        "eval_batches": "INT",
    },
}

# Full-protocol recipe applied by --long-run
LONG_RUN_PRESET = {
    "model": {"hidden": 256, "layers": 6, "rbf_count": 64, "cutoff": 5.0},
    "train": {"lr": 1e-3, "batch_size": 16, "max_epochs": 6000, "patience": 500},
    "run": {"train_size": 950, "val_size": 50},
}


@dataclass(frozen=True)
class PathsConfig:
    data: Optional[Path] = None
    checkpoint: Optional[Path] = None
    output_dir: Path = Path("runs")
    input: Optional[Path] = None
    output: Optional[Path] = None


@dataclass(frozen=True)
class RunOptions:
    """
    Command-specific settings.

    Attributes:
        train_size: training conformations; 0 takes 80% of the data
        val_size: validation conformations; 0 takes 10% (at least one)
        suite: comma-separated verification suites, or "all"
        long_run: apply the full-protocol preset
        verify_confs: random conformations per symmetry check
        verify_transforms: random transforms per conformation
        eval_batches: random batches timed by eval
    """

    train_size: int = 0
    val_size: int = 0
    suite: str = "all"
    long_run: bool = False
    verify_confs: int = 100
    verify_transforms: int = 10
    eval_batches: int = 10


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def sections(self) -> Dict[str, Dict[str, Any]]:
        return {
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "paths": asdict(self.paths),
            "run": asdict(self.run),
        }

    @property
    def checkpoint_path(self) -> Path:
        return self.paths.checkpoint or self.paths.output_dir / "model.npz"

    @property
    def output_path(self) -> Path:
        return self.paths.output or self.paths.output_dir / "predictions.xyz"


def _coerce_sections(raw: Mapping[str, Mapping[str, Any]], origin: str) -> Dict[str, Dict[str, Any]]:
    typed: Dict[str, Dict[str, Any]] = {}
    for section, values in raw.items():
        if section not in FIELD_TYPES:
            raise ConfigError(section, f"unknown section in {origin}; expected one of {list(FIELD_TYPES)}")
        for key, value in values.items():
            kind = FIELD_TYPES[section].get(key)
            if kind is None:
                raise ConfigError(f"{section}.{key}", f"unknown setting in {origin}")
            typed.setdefault(section, {})[key] = coerce_value(value, kind, f"{section}.{key}")
    return typed


def _merge(base: Dict[str, Dict[str, Any]], layer: Mapping[str, Mapping[str, Any]]) -> None:
    for section, values in layer.items():
        base.setdefault(section, {}).update(values)


def defaults(target: str = "energy") -> Dict[str, Dict[str, Any]]:
    train = TrainConfig.for_target(target).with_updates(workers=default_workers())
    return {
        "model": ModelConfig(target=target).to_dict(),
        "train": train.to_dict(),
        "paths": asdict(PathsConfig(output_dir=default_output_dir())),
        "run": asdict(RunOptions()),
    }


def resolve_run_config(
    command: str,
    config_path=None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> RunConfig:
    """
    Layer built-in defaults < config file < --long-run preset < command-line overrides.

    Args:
        command: one of train, eval, predict, verify
        config_path: optional sectioned config file
        overrides: {section: {key: value}} from the command line

    Raises:
        ConfigError: unknown command, section or key, or a value that fails validation
    """
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {COMMANDS}, got {command!r}")
    from_file = _coerce_sections(load_config_file(config_path), str(config_path)) if config_path else {}
    from_cli = _coerce_sections(overrides or {}, "command line")

    target = from_cli.get("model", {}).get("target") or from_file.get("model", {}).get("target") or "energy"
    merged = defaults(target)
    _merge(merged, from_file)
    long_run = from_cli.get("run", {}).get("long_run", merged["run"]["long_run"])
    if long_run:
        _merge(merged, LONG_RUN_PRESET)
    _merge(merged, from_cli)

    paths = merged["paths"]
    if paths["output_dir"] is None:
        raise ConfigError("paths.output_dir", "must be set")
    for name in ("train_size", "val_size", "verify_confs", "verify_transforms", "eval_batches"):
        if merged["run"][name] < 0:
            raise ConfigError(f"run.{name}", f"must be non-negative, got {merged['run'][name]}")

    config = RunConfig(
        command=command,
        model=ModelConfig(**merged["model"]),
        train=TrainConfig(**merged["train"]),
        paths=PathsConfig(**paths),
        run=RunOptions(**merged["run"]),
    )
    logger.debug("Resolved %s configuration: %s", command, config.sections())
    return config


def dump_config(config: RunConfig) -> str:
    return format_config(config.sections())


def _require_file(value: Optional[Path], name: str, command: str) -> None:
    if value is None:
        raise ConfigError(name, f"is required for {command}")
    if not Path(value).is_file():
        raise ConfigError(name, f"file {value} does not exist")


def _require_creatable(directory: Path, name: str) -> None:
    try:
        Path(directory).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(name, f"cannot create directory {directory}: {e}")


def validate_for_command(config: RunConfig) -> RunConfig:
    """Check referenced files and output locations before any compute."""
    paths = config.paths
    if config.command == "train":
        _require_file(paths.data, "data", "train")
        _require_creatable(paths.output_dir, "output_dir")
        _require_creatable(config.checkpoint_path.parent, "checkpoint")
    elif config.command == "eval":
        _require_file(paths.checkpoint, "checkpoint", "eval")
        _require_file(paths.data, "data", "eval")
        _require_creatable(paths.output_dir, "output_dir")
    elif config.command == "predict":
        _require_file(paths.checkpoint, "checkpoint", "predict")
        _require_file(paths.input, "input", "predict")
        _require_creatable(config.output_path.parent, "output")
    elif config.command == "verify":
        parse_suites(config.run.suite)
        if paths.checkpoint is not None:
            _require_file(paths.checkpoint, "checkpoint", "verify")
        _require_creatable(paths.output_dir, "output_dir")
    return config
