from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

SPECTRUM_HEADER = ("index", "block", "eigenvalue", "residual")
GAP_SCAN_HEADER = ("theta", "zeeman_coeff", "spin_conn_coeff", "doublet_splitting")
GAP_CHANNELS_HEADER = ("theta", "inplane_splitting", "normal_splitting", "total_splitting", "geom_potential")
FW_HEADER = ("m", "steps", "odd_residual")
CONFINEMENT_HEADER = ("index", "block", "hs", "case_a", "case_b", "case_c")
GEOMETRY_HEADER = (
    "q1", "q2", "g11", "g12", "g22", "kappa1", "kappa2", "omega1", "omega2", "tr_alpha", "det_alpha",
)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        # Signed zero would break byte-identical reruns.
        return format(value + 0.0, ".17g")
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([format_value(v) for v in row])
    _atomic_write(path, buffer.getvalue())
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=True) + "\n"
    _atomic_write(path, text)
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    """Header and data rows of a table written by write_csv."""
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, [])
        return header, list(reader)
