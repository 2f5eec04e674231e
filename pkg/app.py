"""Command-line entry point: train, eval, predict and verify.

Examples:
    python app.py train --data train.xyz --output-dir runs/demo
    python app.py eval --checkpoint runs/demo/model.npz --data test.xyz
    python app.py predict --checkpoint runs/demo/model.npz --input new.xyz
    python app.py verify --suite equivariance,gradcheck
"""

import argparse
import logging
import sys
from typing import Any, Dict, Optional, Sequence

from cli.commands import EXIT_CONFIG, EXIT_RUNTIME, run_command
from cli.run_config import COMMANDS, dump_config, resolve_run_config, validate_for_command
from utils import settings
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# (flag, section, key, type); type None marks an on/off switch
OVERRIDE_FLAGS = [
    ("--seed", "train", "seed", int),
    ("--workers", "train", "workers", int),
    ("--lr", "train", "lr", float),
    ("--batch-size", "train", "batch_size", int),
    ("--max-epochs", "train", "max_epochs", int),
    ("--patience", "train", "patience", int),
    ("--rho", "train", "rho", float),
    ("--cutoff", "model", "cutoff", float),
    ("--layers", "model", "layers", int),
    ("--hidden", "model", "hidden", int),
    ("--rbf-count", "model", "rbf_count", int),
    ("--target", "model", "target", str),
    ("--use-d2", "model", "use_d2", None),
    ("--use-d3", "model", "use_d3", None),
    ("--share-filters", "model", "share_filters", None),
    ("--schnet-mode", "model", "schnet_mode", None),
    ("--global-frame", "model", "global_frame_mode", None),
    ("--data", "paths", "data", str),
    ("--checkpoint", "paths", "checkpoint", str),
    ("--output-dir", "paths", "output_dir", str),
    ("--input", "paths", "input", str),
    ("--output", "paths", "output", str),
    ("--suite", "run", "suite", str),
    ("--train-size", "run", "train_size", int),
    ("--val-size", "run", "val_size", int),
    ("--verify-confs", "run", "verify_confs", int),
    ("--long-run", "run", "long_run", None),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnlf", description="Local-frame molecular neural network")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", help="sectioned key=value configuration file")
        sub.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        for flag, _, key, kind in OVERRIDE_FLAGS:
            if kind is None:
                sub.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
            else:
                sub.add_argument(flag, dest=key, type=kind, default=None)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Only flags given on the command line override lower layers."""
    overrides: Dict[str, Dict[str, Any]] = {}
    for _, section, key, _ in OVERRIDE_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=settings.log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    try:
        config = resolve_run_config(args.command, args.config, collect_overrides(args))
        if args.dump_config:
            print(dump_config(config), end="")
            return 0
        validate_for_command(config)
        return run_command(config)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
