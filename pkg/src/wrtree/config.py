"""key=value parameter files.

Blank lines and ``#`` comments are ignored.  ``lambda`` and ``time`` are
accepted as spellings of ``lam`` and ``t``.
"""
from __future__ import annotations

from .static_model import ParameterError

ALIASES = {"lambda": "lam", "time": "t", "activity": "lam"}
INT_KEYS = {"d", "s", "depth", "margin", "samples", "seed", "threads", "n"}


def _convert(key: str, raw: str):
    if key in INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ParameterError(f"{key} must be an integer, got {raw!r}") from None
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = ALIASES.get(key.lower(), key.lower().replace("-", "_"))
        out[key] = _convert(key, raw)
    return out


def load_config(path: str) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def merge(file_values: dict, cli_values: dict) -> dict:
    """CLI values win wherever they were given (not None)."""
    out = dict(file_values)
    out.update({k: v for k, v in cli_values.items() if v is not None})
    return out
