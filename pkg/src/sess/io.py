"""File formats: numeric CSV matrices, sparse estimate triplets, group files.

CSV files are comma separated with one header line and a trailing newline.
Group files are JSON documents::

    {
      "n_predictors": 6,              # optional, defaults to the largest index
      "n_responses": 4,
      "predictors": [{"name": "X1", "indices": ["1-3"]},
                     {"name": "X2", "indices": [3, 4, "5-6"]}],
      "responses":  [{"name": "Y1", "indices": [1, 2]},
                     {"name": "Y2", "indices": ["2-4"]}]
    }

Indices are 1-based and ranges are inclusive.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .grouped import GroupSpec


class ParseError(ValueError):
    """Malformed input file; the message carries the location."""


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return repr(float(v))


def format_matrix(m, prefix: str = "c") -> str:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [",".join(f"{prefix}{i + 1}" for i in range(a.shape[1]))]
    lines += [",".join(map(_fmt, row)) for row in a.tolist()]
    return "\n".join(lines) + "\n"


def write_matrix(path, m, prefix: str = "c") -> None:
    atomic_write(path, format_matrix(m, prefix))


def read_matrix(path) -> np.ndarray:
    """Read a numeric CSV with a header row; raises ParseError with line/column."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}, column {col}: "
                                 f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {lineno}, column {col}: non-finite value")
            vals.append(v)
        data.append(vals)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return np.array(data, dtype=float)


def format_triplets(coef) -> str:
    """Nonzero entries as ``row,col,value`` with 1-based indices, row-major order."""
    b = np.asarray(coef, dtype=float)
    lines = ["row,col,value"]
    for i, l in zip(*np.nonzero(b)):
        lines.append(f"{i + 1},{l + 1},{_fmt(b[i, l])}")
    return "\n".join(lines) + "\n"


def write_triplets(path, coef) -> None:
    atomic_write(path, format_triplets(coef))


def read_triplets(path, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["row", "col", "value"]:
        raise ParseError(f"{path}: line 1: expected header 'row,col,value'")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected 3")
        try:
            i, l, v = int(row[0]), int(row[1]), float(row[2])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: malformed triplet {row!r}") from None
        if not (1 <= i <= shape[0] and 1 <= l <= shape[1]):
            raise IndexError(f"{path}: line {lineno}: index ({i}, {l}) outside {shape}")
        out[i - 1, l - 1] = v
    return out


def _parse_indices(items, where: str) -> list[int]:
    out = []
    if not isinstance(items, list):
        raise ParseError(f"{where}: 'indices' must be a list")
    for item in items:
        if isinstance(item, int) and not isinstance(item, bool):
            out.append(item)
        elif isinstance(item, str):
            parts = item.split("-")
            try:
                if len(parts) == 1:
                    out.append(int(parts[0]))
                elif len(parts) == 2:
                    a, b = int(parts[0]), int(parts[1])
                    if b < a:
                        raise ValueError
                    out.extend(range(a, b + 1))
                else:
                    raise ValueError
            except ValueError:
                raise ParseError(f"{where}: bad index or range {item!r}") from None
        else:
            raise ParseError(f"{where}: bad index {item!r}")
    return out


def groups_from_dict(doc: dict) -> GroupSpec:
    try:
        sections = {}
        for key in ("predictors", "responses"):
            names, members = [], []
            for g, entry in enumerate(doc[key]):
                names.append(str(entry.get("name", f"{key[0].upper()}{g + 1}")))
                members.append([i - 1 for i in _parse_indices(entry["indices"],
                                                              f"{key}[{g}]")])
            sections[key] = (names, members)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"groups document is malformed: {exc!r}") from None
    xn, xg = sections["predictors"]
    yn, yg = sections["responses"]
    n_pred = doc.get("n_predictors") or max((i + 1 for g in xg for i in g), default=0)
    n_resp = doc.get("n_responses") or max((i + 1 for g in yg for i in g), default=0)
    return GroupSpec(xg, yg, int(n_pred), int(n_resp), tuple(xn), tuple(yn))


def groups_to_dict(groups: GroupSpec) -> dict:
    def ranges(members):
        out, start, prev = [], None, None
        for i in members:
            i += 1
            if start is None:
                start = prev = i
            elif i == prev + 1:
                prev = i
            else:
                out.append(f"{start}-{prev}" if prev > start else start)
                start = prev = i
        if start is not None:
            out.append(f"{start}-{prev}" if prev > start else start)
        return out

    return {
        "n_predictors": groups.n_predictors,
        "n_responses": groups.n_responses,
        "predictors": [{"name": nm, "indices": ranges(g)}
                       for nm, g in zip(groups.predictor_names, groups.predictor_groups)],
        "responses": [{"name": nm, "indices": ranges(g)}
                      for nm, g in zip(groups.response_names, groups.response_groups)],
    }


def read_groups(path) -> GroupSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return groups_from_dict(doc)


def write_groups(path, groups: GroupSpec) -> None:
    atomic_write(path, json.dumps(groups_to_dict(groups), indent=2) + "\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return doc
