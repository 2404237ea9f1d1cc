"""Deterministic, reproducible output files.

Every file the command-line tool emits carries a run record (command,
parameters, input content hashes, tool version) and is written through a
canonical JSON serializer: fixed key order (insertion order of the
constructing code), floats rendered with ``%.17g`` (round-trip exact),
and atomic replace-on-write so readers never observe partial files.
Wall-clock timing is omitted unless explicitly requested, keeping default
outputs byte-identical across runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import UsageError


@dataclass
class RunRecord:
    """Provenance stamp embedded in every emitted file."""

    command: str
    params: dict
    input_hashes: dict = field(default_factory=dict)
    tool_version: str = __version__
    elapsed_seconds: float | None = None

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "input_hashes": self.input_hashes,
            "tool_version": self.tool_version,
            "elapsed_seconds": self.elapsed_seconds,
        }


def hash_file(path: str) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fmt_float(x: float) -> str:
    if not np.isfinite(x):
        raise UsageError("non-finite value cannot be serialized")
    if x == int(x) and abs(x) < 1e16:
        # Keep integral floats readable but unambiguous.
        return f"{x:.1f}"
    return format(x, ".17g")


def canonical_json(obj, indent: int = 0) -> str:
    """Serialize with deterministic layout and round-trip-exact floats."""
    pad = "  " * indent
    pad_in = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad_in}{json.dumps(str(k))}: {canonical_json(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        scalar = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if scalar:
            return "[" + ", ".join(canonical_json(v) for v in seq) + "]"
        items = [f"{pad_in}{canonical_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise UsageError(f"cannot serialize object of type {type(obj).__name__}")


def write_text_atomic(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then atomically replace."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: dict, record: RunRecord) -> None:
    """Emit a canonical JSON document with the run record first."""
    doc = {"run_record": record.to_dict()}
    doc.update(payload)
    write_text_atomic(path, canonical_json(doc) + "\n")


def write_csv(path: str, header: list, rows: list, record: RunRecord) -> None:
    """Emit CSV whose first line carries the run record as a comment."""
    compact = json.dumps(record.to_dict(), separators=(",", ":"), sort_keys=False)
    lines = [f"# run_record: {compact}", ",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(_fmt_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc
