import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def log_level():
    return os.getenv("GNNLF_LOG_LEVEL", "INFO").upper()


def default_output_dir():
    return Path(os.getenv("GNNLF_OUTPUT_DIR", "runs"))


def default_workers():
    value = os.getenv("GNNLF_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"GNNLF_WORKERS must be an integer, got {value!r}")
