"""Deterministic file emission.

Every artifact file is written atomically (temp file + rename) so a crashed
run never leaves half a CSV behind.  Floats go through ``%.17g`` (shortest
exact round-trip is not guaranteed by %g, but 17 significant digits are),
newlines are LF, and the optional provenance line is a single ``#``-prefixed
JSON object above the CSV header.  Wall-clock times never enter CSVs; they
live in summary.json only, which keeps the data files byte-reproducible.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable, Optional, Sequence

__all__ = ["fmt_float", "atomic_write_text", "write_csv", "write_json"]


def fmt_float(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return "%.17g" % float(x)


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-emit-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence],
              provenance: Optional[dict] = None) -> None:
    lines = []
    if provenance is not None:
        lines.append("# " + json.dumps(provenance, sort_keys=True, separators=(",", ":")))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")
