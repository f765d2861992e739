"""CSV and JSON output with a metadata header.

CSV files start with ``# key=value`` comment lines followed by a normal
header row; JSON files carry a top-level ``metadata`` object.  Both record
the config hash and package version so aggregated outputs can be checked
for consistency.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataIntegrityError

try:
    from importlib.metadata import PackageNotFoundError, version as _dist_version

    VERSION = _dist_version("artifact")
except Exception:  # not installed, running from a source tree
    VERSION = "0.1.0"


def metadata(config_hash: str, **extra) -> dict:
    return {"config_hash": config_hash, "version": VERSION, **extra}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Path):
        return str(obj)
    return obj


def atomic_write_text(path, text: str):
    """Write through a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, data: dict, meta: dict):
    atomic_write_text(path, json.dumps(_clean({"metadata": meta, **data}), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, columns, rows, meta: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])


def read_csv(path):
    """Return ``(metadata, columns, rows)`` with rows as lists of strings."""
    meta, body = {}, []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            else:
                body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    return meta, columns, [r for r in reader]


def write_grid_csv(path, row_label: str, row_values, col_label: str, col_values, grid, meta: dict):
    """Dense 2-D grid: first column is the row coordinate, header holds the column coordinates."""
    grid = np.asarray(grid)
    if grid.shape != (len(row_values), len(col_values)):
        raise DataIntegrityError(f"grid shape {grid.shape} does not match axes")
    cols = [f"{row_label}\\{col_label}"] + [repr(float(c)) for c in col_values]
    rows = ([float(r)] + [float(x) for x in grid[i]] for i, r in enumerate(row_values))
    write_csv(path, cols, rows, meta)


def check_same_hash(metas) -> str:
    hashes = {m.get("config_hash") for m in metas}
    if len(hashes) != 1:
        raise DataIntegrityError(f"refusing to aggregate outputs from different configs: {sorted(map(str, hashes))}")
    return hashes.pop()
