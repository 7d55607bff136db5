"""Small shared helpers: key-value config files, deterministic CSV output."""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

UNDEFINED = float("nan")


def subseed(master: int, *parts: int) -> int:
    """Stable derived seed for one step of a seeded run."""
    return int(np.random.SeedSequence([master, *parts]).generate_state(1)[0])


def is_undefined(x: float) -> bool:
    return isinstance(x, float) and math.isnan(x)


def fmt_value(x) -> str:
    """Render a cell deterministically; floats use shortest round-trip repr."""
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "NaN"
        if x == int(x) and abs(x) < 1e16:
            return repr(x)
        return repr(x)
    return str(x)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write CSV with a fixed line terminator so output bytes are platform-independent."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_value(v) for v in row])


def read_kv_config(path: Path | str) -> dict[str, str]:
    """Parse a plain-text ``key = value`` config file.

    Blank lines and lines starting with ``#`` are ignored; values keep
    internal whitespace but are stripped at the ends.
    """
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
