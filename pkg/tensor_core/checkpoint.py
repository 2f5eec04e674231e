"""Named-tensor container on disk.

The file is a numpy ``.npz`` archive. Each tensor is stored under its own name;
an extra ``__meta__`` entry holds a JSON record with the format version, the
tensor shapes and dtypes, and caller metadata.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_tensors(path, tensors: Mapping[str, np.ndarray], metadata: Dict[str, Any] = None) -> Path:
    path = Path(path)
    if _META_KEY in tensors:
        raise ValueError(f"{_META_KEY!r} is a reserved tensor name")
    arrays = {name: np.asarray(value) for name, value in tensors.items()}
    meta = {
        "format_version": FORMAT_VERSION,
        "tensors": {name: {"shape": list(a.shape), "dtype": str(a.dtype)} for name, a in arrays.items()},
        "metadata": metadata or {},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        np.savez(handle, **arrays, **{_META_KEY: np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)})
    logger.debug("Saved %d tensors to %s", len(arrays), path)
    return path


def load_tensors(path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a container written by save_tensors.

    Raises:
        ValueError: the file is not a tensor container, has an unknown version,
            or a tensor does not match its recorded shape
    """
    path = Path(path)
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise ValueError(f"Cannot read checkpoint {path}: {e}")
    with archive:
        if _META_KEY not in archive.files:
            raise ValueError(f"{path} has no metadata record; not a checkpoint")
        meta = json.loads(archive[_META_KEY].tobytes().decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        tensors = {}
        for name, spec in meta["tensors"].items():
            array = archive[name]
            if list(array.shape) != spec["shape"] or str(array.dtype) != spec["dtype"]:
                raise ValueError(f"{path}: tensor {name!r} does not match its recorded shape/dtype")
            tensors[name] = array
    return tensors, meta["metadata"]
