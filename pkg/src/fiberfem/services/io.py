"""CSV and JSON result files.

Floats are written as shortest round-trip decimals (``repr``) with '.' as the
decimal separator, so files do not depend on the locale.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel

from ..core import DataFileError
from ..engine.fiber import FiberTrace
from ..engine.inversion import ImageCurve

VECTOR_HEADER = ["node_index", "value"]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_rows(path: Path | str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write a CSV file with '\\n' line endings.

    Raises:
        DataFileError: On I/O failure
    """
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise DataFileError(f"Cannot write CSV: {e!s}", path=str(path))
    return path


def write_vector_csv(path: Path | str, values: NDArray[np.float64]) -> Path:
    """Interior vector as ``node_index,value`` rows."""
    return write_rows(path, VECTOR_HEADER, [[i, _fmt(x)] for i, x in enumerate(np.asarray(values))])


def read_vector_csv(path: Path | str, size: int | None = None) -> NDArray[np.float64]:
    """Read a ``node_index,value`` CSV.

    Raises:
        DataFileError: If the file is missing, malformed or of the wrong size
    """
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataFileError(f"Cannot read vector: {e!s}", path=str(path))
    if not rows or [c.strip() for c in rows[0]] != VECTOR_HEADER:
        raise DataFileError("Vector CSV must start with header node_index,value", path=str(path))
    try:
        pairs = sorted((int(row[0]), float(row[1])) for row in rows[1:] if row)
    except (ValueError, IndexError) as e:
        raise DataFileError(f"Malformed vector row: {e!s}", path=str(path))
    indices = [i for i, _ in pairs]
    if indices != list(range(len(pairs))):
        raise DataFileError("Vector CSV indices must be 0..n-1", path=str(path))
    if size is not None and len(pairs) != size:
        raise DataFileError(
            f"Vector has {len(pairs)} entries, expected {size}",
            path=str(path),
        )
    return np.array([x for _, x in pairs], dtype=np.float64)


def write_columns_csv(path: Path | str, names: Sequence[str], columns: NDArray[np.float64]) -> Path:
    """Matrix columns side by side, first column the node index."""
    columns = np.asarray(columns)
    rows = [[i, *(_fmt(x) for x in row)] for i, row in enumerate(columns)]
    return write_rows(path, ["node_index", *names], rows)


def write_trace_csv(path: Path | str, trace: FiberTrace) -> Path:
    """Columns t, height_i, Fheight_i, residual_h, residual_full, newton_iters."""
    d = int(trace.direction.size)
    header = [
        "t",
        *(f"height_{i + 1}" for i in range(d)),
        *(f"Fheight_{i + 1}" for i in range(d)),
        "residual_h",
        "residual_full",
        "newton_iters",
    ]
    rows = [
        [
            _fmt(t),
            *(_fmt(h) for h in p.heights),
            *(_fmt(h) for h in p.F_heights),
            _fmt(p.residual_h),
            _fmt(p.residual_full),
            p.newton_iterations,
        ]
        for t, p in zip(trace.t, trace.points, strict=True)
    ]
    return write_rows(path, header, rows)


def write_curve_csv(path: Path | str, curve: ImageCurve) -> Path:
    """Columns s, v1, v2, b1, b2, residual_h."""
    rows = [
        [_fmt(s), _fmt(v[0]), _fmt(v[1]), _fmt(b[0]), _fmt(b[1]), _fmt(r)]
        for s, v, b, r in zip(curve.s, curve.v, curve.b, curve.residual_h, strict=True)
    ]
    return write_rows(path, ["s", "v1", "v2", "b1", "b2", "residual_h"], rows)


def write_json(path: Path | str, data: Any) -> Path:
    """Write a model, list of models or plain data as indented JSON.

    Raises:
        DataFileError: On I/O failure
    """
    path = Path(path)

    def plain(item: Any) -> Any:
        if isinstance(item, BaseModel):
            return item.model_dump(mode="json")
        if isinstance(item, list):
            return [plain(x) for x in item]
        return item

    try:
        path.write_text(json.dumps(plain(data), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Cannot write JSON: {e!s}", path=str(path))
    return path
