"""Plain-text writers: CSV tables and key=value blocks with a provenance header."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__

TOOL = "warpflow"


def fmt(x) -> str:
    """17 significant digits for floats, ``n/a`` for missing values."""
    if x is None:
        return "n/a"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def header(command: str, config: Mapping, manifold: str, grid, seed) -> list[str]:
    lines = [f"# tool={TOOL} version={__version__}",
             f"# command={command}",
             f"# manifold={manifold}",
             f"# N={grid}",
             f"# seed={seed}"]
    for k in sorted(config):
        lines.append(f"# config.{k}={fmt(config[k])}")
    return lines


def csv_text(head: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for line in head:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def kv_text(head: Sequence[str], items: Mapping) -> str:
    out = list(head)
    out += [f"{k}={fmt(v)}" for k, v in items.items()]
    return "\n".join(out) + "\n"


def write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_kv(path: Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_csv_body(text: str) -> list[dict[str, str]]:
    """Rows of a CSV produced by :func:`csv_text` (header comments skipped)."""
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(body))


def check_lines(checks: Mapping[str, bool], extra: Optional[Mapping] = None) -> str:
    out = [f"check.{k}={'pass' if v else 'fail'}" for k, v in checks.items()]
    if extra:
        out += [f"{k}={fmt(v)}" for k, v in extra.items()]
    return "\n".join(out) + "\n"
