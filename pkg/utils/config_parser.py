import re
from pathlib import Path
from typing import Any, Dict, Mapping

from utils.errors import ConfigError

SECTION_PATTERN = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
PAIR_PATTERN = re.compile(r"^([A-Za-z_][\w-]*)\s*=\s*(.*)$")

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def parse_config_text(text: str) -> Dict[str, Dict[str, str]]:
    """
    Parse a sectioned key-value configuration.

    Expected format:
    # comment
    [model]
    hidden = 64
    use_d2 = false
    [paths]
    data = train.xyz

    Args:
        text: file content

    Returns:
        dict: {section: {key: raw string value}}

    Raises:
        ConfigError: a line is neither a section, a pair, a comment nor blank;
            a key appears outside a section or twice in one section
    """
    result: Dict[str, Dict[str, str]] = {}
    section = None

    for number, raw in enumerate(text.splitlines(), start=1):
        # Strip comments
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        section_match = SECTION_PATTERN.match(line)
        if section_match:
            section = section_match.group(1).lower()
            result.setdefault(section, {})
            continue

        pair_match = PAIR_PATTERN.match(line)
        if not pair_match:
            raise ConfigError(f"line {number}", f"cannot parse {raw.strip()!r}; expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {number}", "key-value pair before any [section]")

        key = pair_match.group(1).replace("-", "_")
        if key in result[section]:
            raise ConfigError(f"{section}.{key}", f"given twice (line {number})")
        result[section][key] = pair_match.group(2).strip().strip('"')

    return result


def load_config_file(path) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"))


def coerce_value(raw: Any, kind: str, name: str) -> Any:
    """
    Convert a raw config value to its declared type.

    Args:
        raw: string from a file, or an already-typed value from the command line
        kind: INT, FLOAT, BOOL, STR, PATH or INTS (comma-separated integers)
        name: field name for error messages

    Returns:
        The typed value; "none" or an empty string gives None for PATH
    """
    kind = kind.upper()
    text = str(raw).strip() if not isinstance(raw, (list, tuple)) else None

    try:
        # Integer types
        if kind == "INT":
            if isinstance(raw, bool):
                raise ValueError
            return int(raw) if not isinstance(raw, str) else int(text)

        # Decimal types
        elif kind == "FLOAT":
            return float(raw)

        # Boolean type
        elif kind == "BOOL":
            if isinstance(raw, bool):
                return raw
            if text.lower() in TRUE_WORDS:
                return True
            if text.lower() in FALSE_WORDS:
                return False
            raise ValueError

        # Integer list
        elif kind == "INTS":
            if text is None:
                return tuple(int(v) for v in raw)
            return tuple(int(v) for v in text.split(",") if v.strip())

        # Paths
        elif kind == "PATH":
            if raw is None or text == "" or text.lower() == "none":
                return None
            return Path(text)

        # Default fallback to text
        else:
            return text
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot read {raw!r} as {kind.lower()}")


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def format_config(sections: Mapping[str, Mapping[str, Any]]) -> str:
    """Render sections in the format parse_config_text reads."""
    blocks = []
    for section, values in sections.items():
        lines = [f"[{section}]"]
        lines += [f"{key} = {format_value(value)}" for key, value in values.items()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
