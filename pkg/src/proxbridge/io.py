"""Dataset ingestion and deterministic result writers.

Floats are written with ``repr``, the shortest decimal string that reads
back to the same double, so re-running a command reproduces files byte for
byte.  CSV artifacts carry the resolved config in leading ``#`` lines, which
``load_dataset`` skips.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError

ROLE_COLUMNS = ("y", "a", "z", "w")
_X_COLUMN = re.compile(r"^x([1-9][0-9]*)$")


@dataclass(frozen=True, eq=False)
class LoadedData:
    dataset: Dataset
    ignored_columns: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.dataset.n


def _data_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def load_dataset(path) -> LoadedData:
    """Read a CSV with header columns y, a, z, w and optional x1..xd.

    Row numbers in error messages count data rows from 1 (header and
    comment lines excluded).  Unrecognised columns are dropped and listed in
    ``ignored_columns``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    lines = list(_data_lines(path.read_text()))
    if not lines:
        raise DataError(f"{path}: no header row")
    reader = csv.reader(io.StringIO("\n".join(line for _, line in lines)))
    header = [h.strip() for h in next(reader)]
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise DataError(f"{path}: duplicate column {dup!r}")
    missing = [c for c in ROLE_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: missing column {missing[0]!r}")
    x_idx = sorted(int(m.group(1)) for h in header if (m := _X_COLUMN.match(h)))
    if x_idx != list(range(1, len(x_idx) + 1)):
        raise DataError(f"{path}: covariate columns must be x1..xd without gaps, got {['x%d' % j for j in x_idx]}")
    wanted = list(ROLE_COLUMNS) + [f"x{j}" for j in x_idx]
    ignored = [h for h in header if h not in wanted]
    pos = {h: header.index(h) for h in wanted}
    values = {h: [] for h in wanted}
    for row_no, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
        for h in wanted:
            cell = row[pos[h]].strip()
            try:
                val = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {row_no}, column {h!r}") from None
            if not math.isfinite(val):
                raise DataError(f"{path}: non-finite value {cell!r} at row {row_no}, column {h!r}")
            if h == "a" and val not in (0.0, 1.0):
                raise DataError(f"{path}: treatment must be 0 or 1; row {row_no} has a={cell}")
            values[h].append(val)
    x = np.column_stack([values[f"x{j}"] for j in x_idx]) if x_idx else np.zeros((len(values["y"]), 0))
    ds = Dataset(np.array(values["y"]), np.array(values["a"]), np.array(values["z"]), np.array(values["w"]), x)
    return LoadedData(ds, ignored)


def fmt(value) -> str:
    """Shortest round-trip text for CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return "" if value is None else str(value)


def to_jsonable(obj):
    """Convert numpy values and non-finite floats into plain JSON types.
    nan/inf become the strings "nan", "inf", "-inf"."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def _header_lines(meta: dict | None) -> str:
    if not meta:
        return ""
    return "".join(f"# {key}: {json.dumps(to_jsonable(val), sort_keys=True)}\n" for key, val in meta.items())


def write_rows(rows, fields, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(_header_lines(meta))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([fmt(row.get(f)) for f in fields])
    path.write_text(buf.getvalue())
    return path


def write_dataset(dataset: Dataset, path, meta: dict | None = None) -> Path:
    names = ["y", "a", "z", "w", *dataset.x_names]
    cols = [dataset.column(c) for c in names]
    rows = [{c: (int(v) if c == "a" else float(v)) for c, v in zip(names, vals)} for vals in zip(*cols)]
    return write_rows(rows, names, path, meta)


PLOT_FILES = {
    "bias_vs_n.csv": ("n", "arm", "bias_plugin", "bias_db", "root_n_bias_plugin", "root_n_bias_db",
                      "mc_se_root_n_bias_db", "rmse_plugin", "rmse_db"),
    "coverage_vs_n.csv": ("n", "arm", "coverage", "replications", "mean_sigma2", "sd_db"),
    "set_distance_vs_n.csv": ("n", "arm", "mean_set_dist", "median_set_dist", "median_minnorm_dist", "mean_c_n"),
}


def write_mc(result, directory, meta: dict, timestamp: str | None = None) -> list[Path]:
    """replicates.csv, summary.json and the three plot-data CSVs."""
    from .simulation import ROW_FIELDS

    directory = Path(directory)
    paths = [write_rows(result.rows, ROW_FIELDS, directory / "replicates.csv", meta)]
    for name, cols in PLOT_FILES.items():
        paths.append(write_rows(result.summary, cols, directory / name, meta))
    summary = {**meta, "summary": result.summary, "failures": result.failures}
    if timestamp is not None:
        summary["timestamp"] = timestamp
    paths.append(write_json(summary, directory / "summary.json"))
    return paths
