"""CSV ingestion and the plain-text scenario format."""

import csv
import math
from dataclasses import replace

import numpy as np

from .data import Dataset
from .distributions import MediatorFamily
from .exceptions import IngestionError
from .params import Theta


def ingest_csv(path, column_map):
    """Read a comma-separated file with a header into a :class:`Dataset`.

    ``column_map`` has keys ``y``, ``m``, ``x`` and optionally ``z`` (a list
    of confounder column names). Errors name the 1-based file line and the
    column; the header is line 1.
    """
    y_col, m_col, x_col = column_map["y"], column_map["m"], column_map["x"]
    z_cols = list(column_map.get("z") or ())
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("file is empty; a header row is required", line=1) from None
        index = {}
        for col in [y_col, m_col, x_col, *z_cols]:
            if col not in header:
                raise IngestionError("column not found in header", line=1, column=col)
            index[col] = header.index(col)
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not any(cell.strip() for cell in row):
                continue
            vals = {}
            for col, j in index.items():
                cell = row[j].strip() if j < len(row) else ""
                if cell == "":
                    raise IngestionError("missing value", line=lineno, column=col)
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"non-numeric value {cell!r}", line=lineno,
                                         column=col) from None
                if not math.isfinite(v):
                    raise IngestionError(f"non-finite value {cell!r}", line=lineno, column=col)
                vals[col] = v
            if vals[m_col] < 0:
                raise IngestionError("mediator negative", line=lineno, column=m_col)
            rows.append([vals[y_col], vals[m_col], vals[x_col]] + [vals[c] for c in z_cols])
    if not rows:
        raise IngestionError("no data rows after the header")
    arr = np.asarray(rows, dtype=float)
    names = {"y": y_col, "m": m_col, "x": x_col, "z": z_cols}
    return Dataset(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3:], names=names)


# ---------------------------------------------------------------------------
# scenario files: one "key = value" per line, '#' starts a comment
# ---------------------------------------------------------------------------

_FLOATS = ("x1", "x2", "B", "delta", "sigma", "r", "eta")
_INTS = ("n", "n_reps", "seed")
_VECTORS = {"beta": 6, "alpha": 2, "gamma": 2}


def read_key_values(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestionError(f"cannot open scenario file {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestionError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise IngestionError(f"duplicate key {key!r}", line=lineno, column=key)
        out[key] = (value, lineno)
    return out


def _convert(key, value, lineno):
    try:
        if key in _INTS:
            return int(value)
        if key in _FLOATS:
            return float(value)
        if key in _VECTORS:
            parts = [float(p) for p in value.replace(",", " ").split()]
            if len(parts) != _VECTORS[key]:
                raise IngestionError(f"{key} needs {_VECTORS[key]} numbers, got {len(parts)}",
                                     line=lineno, column=key)
            return tuple(parts)
        if key == "families":
            return tuple(MediatorFamily.parse(p) for p in value.replace(",", " ").split())
    except IngestionError:
        raise
    except ValueError as exc:
        raise IngestionError(f"bad value {value!r}: {exc}", line=lineno, column=key) from None
    return value


def load_scenario(path):
    """Build a scenario from a key = value file.

    Either ``preset = zinb-30`` (optionally overriding n, n_reps, seed, x1,
    x2, B, families) or a full parameter set: family, beta, delta, alpha,
    gamma, eta, plus sigma (ZILoN) or r (ZINB).
    """
    from . import simulate

    kv = read_key_values(path)
    known = set(_FLOATS) | set(_INTS) | set(_VECTORS) | {
        "family", "families", "preset", "x_source", "target_zero_fraction", "name"}
    vals = {}
    for key, (value, lineno) in kv.items():
        if key not in known:
            raise IngestionError(f"unknown key {key!r}", line=lineno, column=key)
        vals[key] = _convert(key, value, lineno)

    overrides = {k: vals[k] for k in ("n", "n_reps", "seed", "x1", "x2", "B", "families",
                                      "target_zero_fraction", "name") if k in vals}
    try:
        if "x_source" in vals:
            overrides["x_source"] = simulate.XSource.parse(vals["x_source"])
        if "preset" in vals:
            return replace(simulate.preset(vals["preset"]), **overrides)
        missing = [k for k in ("family", "beta", "delta", "alpha", "gamma", "eta") if k not in vals]
        if missing:
            raise IngestionError(f"scenario is missing keys: {', '.join(missing)}")
        fam = MediatorFamily.parse(vals["family"])
        theta = Theta.build(fam, vals["beta"], vals["delta"], vals["alpha"], vals["gamma"],
                            vals["eta"], sigma=vals.get("sigma", 1.0), r=vals.get("r", 1.0))
        return simulate.Scenario(fam, theta, **overrides)
    except ValueError as exc:
        if isinstance(exc, IngestionError):
            raise
        raise IngestionError(str(exc)) from None
