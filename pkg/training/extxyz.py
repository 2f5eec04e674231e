"""Extended-XYZ reading and writing.

Frame layout:
    line 1: atom count N
    line 2: key=value pairs, e.g. ``Properties=species:S:1:pos:R:3:forces:R:3 energy=-12.5``
    N lines: ``<symbol> x y z [fx fy fz]``
"""

import logging
import re
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from ase.data import atomic_numbers, chemical_symbols

from geometry.molecule import MoleculeConf
from utils.errors import GeometryError, ParseError

logger = logging.getLogger(__name__)

PROPERTY_KEYS = ("dipole", "r2")
DEFAULT_COLUMNS = "species:S:1:pos:R:3"

_PAIR = re.compile(r'([A-Za-z_][\w-]*)=("[^"]*"|\S+)')
_COLUMN_TYPES = {"S", "R", "I", "L"}


def parse_comment_line(line: str) -> Dict[str, str]:
    """Key/value pairs of a frame's comment line; quotes are stripped."""
    return {key: value.strip('"') for key, value in _PAIR.findall(line)}


def parse_properties(descriptor: str, line_number: int = None, frame: int = None) -> List[Dict]:
    """
    Parse a ``Properties=`` column descriptor.

    Args:
        descriptor: e.g. ``species:S:1:pos:R:3:forces:R:3``

    Returns:
        list of {'name', 'type', 'count', 'start'} in column order
    """
    parts = descriptor.split(":")
    if len(parts) % 3 != 0:
        raise ParseError(f"Properties descriptor {descriptor!r} is not name:type:count triples", line_number, frame)
    columns = []
    start = 0
    for k in range(0, len(parts), 3):
        name, kind, count = parts[k], parts[k + 1].upper(), parts[k + 2]
        if kind not in _COLUMN_TYPES or not count.isdigit() or int(count) < 1:
            raise ParseError(f"bad column {name}:{kind}:{count} in Properties", line_number, frame)
        columns.append({"name": name, "type": kind, "count": int(count), "start": start})
        start += int(count)
    names = [c["name"] for c in columns]
    if names[:2] != ["species", "pos"] or columns[1]["count"] != 3:
        raise ParseError("Properties must begin with species:S:1:pos:R:3", line_number, frame)
    if "forces" in names and columns[names.index("forces")]["count"] != 3:
        raise ParseError("forces column must have 3 components", line_number, frame)
    return columns


def _atomic_number(symbol: str, line_number: int, frame: int) -> int:
    if symbol.isdigit():
        return int(symbol)
    number = atomic_numbers.get(symbol)
    if number is None:
        raise ParseError(f"unknown element symbol {symbol!r}", line_number, frame)
    return number


def _float(text: str, what: str, line_number: int, frame: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not a number", line_number, frame)
    if not np.isfinite(value):
        raise ParseError(f"{what} {text!r} is not finite", line_number, frame)
    return value


def _parse_frame(lines: Sequence[str], start: int, frame: int):
    """Parse the frame beginning at ``lines[start]``; returns (conf, next_index)."""
    header = lines[start].strip()
    line_number = start + 1
    if not header.isdigit():
        raise ParseError(f"expected atom count, got {header!r}", line_number, frame)
    n_atoms = int(header)
    if n_atoms < 1:
        raise ParseError("atom count must be positive", line_number, frame)
    if start + 1 >= len(lines):
        raise ParseError("missing comment line", line_number + 1, frame)

    info = parse_comment_line(lines[start + 1])
    columns = parse_properties(info.get("Properties", DEFAULT_COLUMNS), line_number + 1, frame)
    by_name = {c["name"]: c for c in columns}
    width = sum(c["count"] for c in columns)

    z = np.zeros(n_atoms, dtype=np.int64)
    r = np.zeros((n_atoms, 3))
    forces = np.zeros((n_atoms, 3)) if "forces" in by_name else None
    for k in range(n_atoms):
        index = start + 2 + k
        if index >= len(lines) or not lines[index].strip():
            raise ParseError(f"expected {n_atoms} atom lines, found {k}", index + 1, frame)
        fields = lines[index].split()
        if len(fields) != width:
            raise ParseError(f"expected {width} columns, got {len(fields)}", index + 1, frame)
        z[k] = _atomic_number(fields[0], index + 1, frame)
        pos = by_name["pos"]["start"]
        r[k] = [_float(v, "coordinate", index + 1, frame) for v in fields[pos : pos + 3]]
        if forces is not None:
            col = by_name["forces"]["start"]
            forces[k] = [_float(v, "force", index + 1, frame) for v in fields[col : col + 3]]

    energy = None
    if "energy" in info:
        energy = _float(info["energy"], "energy", line_number + 1, frame)
    properties = {
        key: _float(info[key], key, line_number + 1, frame) for key in PROPERTY_KEYS if key in info
    }
    try:
        conf = MoleculeConf(z=z, r=r, energy=energy, forces=forces, properties=properties)
    except GeometryError as e:
        raise GeometryError(f"frame {frame}: {e}")
    return conf, start + 2 + n_atoms


def _decode(data: Union[str, bytes]) -> str:
    """ASCII text of ``data``; any other byte is a ParseError on its line."""
    if isinstance(data, str):
        if data.isascii():
            return data
        bad = next(i for i, ch in enumerate(data) if not ch.isascii())
        raise ParseError(f"non-ASCII character {data[bad]!r}", data.count("\n", 0, bad) + 1)
    try:
        return data.decode("ascii")
    except UnicodeDecodeError as e:
        raise ParseError(f"non-ASCII byte 0x{data[e.start]:02x}", data.count(b"\n", 0, e.start) + 1)


def read_confs(text: Union[str, bytes]) -> List[MoleculeConf]:
    lines = _decode(text).splitlines()
    confs = []
    index = 0
    while index < len(lines):
        if not lines[index].strip():
            index += 1
            continue
        conf, index = _parse_frame(lines, index, len(confs))
        confs.append(conf)
    return confs


def load_extxyz(path, target: Optional[str] = None):
    """
    Read every frame of an extended-XYZ file.

    Args:
        path: file to read
        target: dataset target kind; inferred from the frames when omitted

    Returns:
        Dataset with one MoleculeConf per frame

    Raises:
        ParseError: malformed input, with the line number and frame index
        GeometryError: coincident atoms
    """
    from training.dataset import Dataset

    path = Path(path)
    confs = read_confs(path.read_bytes())
    logger.info("Read %d frames from %s", len(confs), path)
    return Dataset.from_confs(confs, target=target, source=str(path))


def _number(value: float) -> str:
    return repr(float(value))


def format_frame(
    conf: MoleculeConf,
    energy: Optional[float] = None,
    forces: Optional[np.ndarray] = None,
    properties: Optional[Mapping[str, float]] = None,
) -> str:
    energy = conf.energy if energy is None else energy
    forces = conf.forces if forces is None else np.asarray(forces, dtype=np.float64)
    values = dict(conf.properties)
    values.update(properties or {})

    descriptor = DEFAULT_COLUMNS + (":forces:R:3" if forces is not None else "")
    comment = [f"Properties={descriptor}"]
    if energy is not None:
        comment.append(f"energy={_number(energy)}")
    for key in sorted(values):
        comment.append(f"{key}={_number(values[key])}")
    comment.append('pbc="F F F"')

    lines = [str(conf.n_atoms), " ".join(comment)]
    for k in range(conf.n_atoms):
        row = [chemical_symbols[int(conf.z[k])]] + [_number(v) for v in conf.r[k]]
        if forces is not None:
            row += [_number(v) for v in forces[k]]
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def write_extxyz(
    path,
    confs: Sequence[MoleculeConf],
    energies: Optional[Sequence[float]] = None,
    forces: Optional[Sequence[np.ndarray]] = None,
    properties: Optional[Mapping[str, Sequence[float]]] = None,
) -> Path:
    """Write frames; given energies/forces/properties replace the stored targets."""
    path = Path(path)
    for name, values in (("energies", energies), ("forces", forces)):
        if values is not None and len(values) != len(confs):
            raise ValueError(f"{name} has {len(values)} entries for {len(confs)} conformations")
    for name, values in (properties or {}).items():
        if len(values) != len(confs):
            raise ValueError(f"property {name} has {len(values)} entries for {len(confs)} conformations")
    chunks = []
    for k, conf in enumerate(confs):
        extra = {name: values[k] for name, values in (properties or {}).items()}
        chunks.append(
            format_frame(
                conf,
                energy=None if energies is None else energies[k],
                forces=None if forces is None else forces[k],
                properties=extra,
            )
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(chunks), encoding="ascii")
    logger.info("Wrote %d frames to %s", len(confs), path)
    return path
