"""Field and report persistence: CSV, legacy ASCII VTK and JSON."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import GridSpec, ScalarField

AXES = "ijk"
COORDS = "xyz"


def csv_header(dimension: int) -> str:
    return ",".join(list(AXES[:dimension]) + list(COORDS[:dimension]) + ["value"])


def write_csv(field: ScalarField, path) -> Path:
    """One row per node in row-major (C) order; unset nodes are written as ``nan``."""
    path = Path(path)
    grid = field.grid
    d = grid.dimension
    idx = np.indices(grid.counts).reshape(d, -1).T
    xyz = grid.coordinates().reshape(-1, d)
    vals = field.values.reshape(-1)
    lines = [csv_header(d)]
    for ii, xx, v in zip(idx, xyz, vals):
        lines.append(",".join([str(int(i)) for i in ii] + [repr(float(x)) for x in xx] + [_num(v)]))
    path.write_text("\n".join(lines) + "\n")
    return path


def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else "nan"


def read_csv(path, label: str = "") -> ScalarField:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    d = (len(header) - 1) // 2
    if d not in (2, 3) or ",".join(header) != csv_header(d):
        raise ConfigError(f"{path}: unexpected CSV header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = data[:, :d].astype(int)
    xyz = data[:, d:2 * d]
    counts = tuple(int(c) for c in idx.max(axis=0) + 1)
    if len(data) != int(np.prod(counts)):
        raise ConfigError(f"{path}: {len(data)} rows do not fill a {counts} grid")
    origin = xyz[0]
    spacing = float(np.max((xyz[-1] - origin) / (np.asarray(counts) - 1)))
    grid = GridSpec(tuple(origin), spacing, counts)
    values = np.full(counts, np.nan)
    values[tuple(idx.T)] = data[:, -1]
    return ScalarField(grid, values, label or path.stem)


def write_vtk(field: ScalarField, path, title: str = "atl field") -> Path:
    """Legacy ASCII STRUCTURED_POINTS; VTK orders points with x fastest."""
    path = Path(path)
    grid = field.grid
    dims = list(grid.counts) + [1] * (3 - grid.dimension)
    origin = list(grid.origin) + [0.0] * (3 - grid.dimension)
    spacing = [grid.spacing] * 3
    vals = field.values.ravel(order="F")
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(n) for n in dims),
        "ORIGIN " + " ".join(repr(float(o)) for o in origin),
        "SPACING " + " ".join(repr(float(s)) for s in spacing),
        f"POINT_DATA {vals.size}",
        "SCALARS value double",
        "LOOKUP_TABLE default",
    ]
    lines.extend(_num(v) for v in vals)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path, label: str = "") -> ScalarField:
    path = Path(path)
    lines = path.read_text().splitlines()
    meta = {}
    start = None
    for n, line in enumerate(lines):
        key, _, rest = line.partition(" ")
        if key in ("DIMENSIONS", "ORIGIN", "SPACING", "POINT_DATA"):
            meta[key] = rest.split()
        if line.startswith("LOOKUP_TABLE"):
            start = n + 1
            break
    if start is None or "DIMENSIONS" not in meta:
        raise ConfigError(f"{path}: not a STRUCTURED_POINTS file")
    dims = [int(v) for v in meta["DIMENSIONS"]]
    d = 2 if dims[2] == 1 else 3
    counts = tuple(dims[:d])
    origin = tuple(float(v) for v in meta["ORIGIN"][:d])
    spacing = float(meta["SPACING"][0])
    vals = np.array([float(v) for v in " ".join(lines[start:]).split()])
    if vals.size != int(np.prod(counts)):
        raise ConfigError(f"{path}: expected {int(np.prod(counts))} values, found {vals.size}")
    grid = GridSpec(origin, spacing, counts)
    return ScalarField(grid, vals.reshape(counts, order="F"), label or path.stem)


def read_field(path, label: str = "") -> ScalarField:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return read_csv(path, label)
    if suffix == ".vtk":
        return read_vtk(path, label)
    raise ConfigError(f"unsupported field format {suffix!r} (use .csv or .vtk)")


def write_field(field: ScalarField, stem, formats=("csv", "vtk")) -> list[Path]:
    stem = Path(stem)
    out = []
    for fmt in formats:
        if fmt == "csv":
            out.append(write_csv(field, stem.parent / f"{stem.name}.csv"))
        elif fmt == "vtk":
            out.append(write_vtk(field, stem.parent / f"{stem.name}.vtk"))
        else:
            raise ConfigError(f"unknown format {fmt!r}")
    return out


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(data, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def write_table(rows: list[dict], path) -> Path:
    """Small CSV table with the union of keys in first-seen order."""
    path = Path(path)
    keys: list[str] = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_cell(row.get(k, "")) for k in keys))
    path.write_text("\n".join(lines) + "\n")
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in v)
    return str(v)
