"""Versioned CSV tables with gnuplot-ready .dat companions."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

TABLE_VERSION = 1


def _header(kind: str) -> str:
    return f"# wormhole-lab {kind} v{TABLE_VERSION}"


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        if any(c in v for c in ",\n\r"):
            raise ValueError(f"table cell {v!r} contains a separator")
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_table(base, kind: str, columns: Mapping[str, object], meta: Optional[Mapping[str, object]] = None) -> list:
    """Write ``base``.csv and ``base``.dat; returns both paths.

    All columns must have the same length.  ``meta`` goes into a second
    comment line as key=value tokens.
    """
    base = Path(base)
    names = list(columns)
    if not names:
        raise ValueError("a table needs at least one column")
    cols = [np.atleast_1d(np.asarray(columns[k], dtype=object)) for k in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("table columns differ in length")
    for k in names:
        if not k or any(c in k for c in ", \n"):
            raise ValueError(f"bad column name {k!r}")
    head = [_header(kind)]
    if meta:
        head.append("# " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()))
    rows = [[_fmt(c[i]) for c in cols] for i in range(n)]
    csv_path = base.with_suffix(".csv")
    dat_path = base.with_suffix(".dat")
    with open(csv_path, "w", newline="\n") as fh:
        fh.write("\n".join(head + [",".join(names)]) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    with open(dat_path, "w", newline="\n") as fh:
        fh.write("\n".join(head + ["# " + " ".join(names)]) + "\n")
        for row in rows:
            fh.write(" ".join(row) + "\n")
    return [csv_path, dat_path]


def read_table(path, kind: str) -> dict:
    """Columns of a CSV written by :func:`write_table`, numeric ones as float arrays."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != _header(kind):
        raise ValueError(f"{path}: line 1: unknown or missing {kind} table version header")
    i = 1
    meta = {}
    if len(lines) > 1 and lines[1].startswith("#"):
        for tok in lines[1][1:].split():
            if "=" not in tok:
                raise ValueError(f"{path}: line 2: malformed metadata token {tok!r}")
            k, v = tok.split("=", 1)
            meta[k] = v
        i = 2
    if len(lines) <= i:
        raise ValueError(f"{path}: line {i + 1}: missing column header")
    names = lines[i].split(",")
    raw = {k: [] for k in names}
    for lineno, line in enumerate(lines[i + 1:], start=i + 2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise ValueError(f"{path}: line {lineno}: expected {len(names)} columns, found {len(parts)}")
        for k, p in zip(names, parts):
            raw[k].append(p)
    out = {}
    for k, vals in raw.items():
        try:
            out[k] = np.array([float(v) for v in vals])
        except ValueError:
            out[k] = vals
    out["_meta"] = meta
    return out
