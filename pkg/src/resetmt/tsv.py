"""Tab-separated input and output.

Input files have a header row and either a ``pvalue`` column or ``label``
and ``score`` columns, plus any number of ``x_``-prefixed side-information
columns and an optional ``id``. Problems are reported with the 1-based line
number of the offending row.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DataError, HypothesisTable, PValueTable
from .pvalue_adapter import replace_infinite_scores

SIDE_PREFIX = "x_"


@dataclass(frozen=True)
class ParsedInput:
    kind: str  # "pvalue" or "competition"
    table: PValueTable | HypothesisTable
    side_names: tuple[str, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return self.table.ids

    @property
    def raw_scores(self) -> np.ndarray:
        return self.table.pvalues if self.kind == "pvalue" else self.table.scores


def _number(text: str, column: str, line: int, allow_inf: bool = False) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"line {line}: column {column!r}: cannot parse {text!r} as a number") from None
    if math.isnan(v) or (math.isinf(v) and not (allow_inf and v > 0)):
        raise DataError(f"line {line}: column {column!r}: value {text!r} is not finite")
    return v


def read_input(path) -> ParsedInput:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        rows = list(reader)

    dupes = {h for h in header if header.count(h) > 1}
    if dupes:
        raise DataError(f"line 1: duplicate column(s) {sorted(dupes)}")
    has_p = "pvalue" in header
    has_comp = "label" in header or "score" in header
    if has_p and has_comp:
        raise DataError("line 1: give either 'pvalue' or 'label'+'score', not both")
    if not has_p and not ("label" in header and "score" in header):
        raise DataError("line 1: need a 'pvalue' column or both 'label' and 'score' columns")
    side = [h for h in header if h.startswith(SIDE_PREFIX)]
    known = {"pvalue", "label", "score", "id", *side}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise DataError(f"line 1: unrecognized column(s) {unknown}; side information needs the {SIDE_PREFIX!r} prefix")

    col = {h: i for i, h in enumerate(header)}
    ids, first, labels, x = [], [], [], []
    seen = {}
    for offset, row in enumerate(rows):
        line = offset + 2
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        ident = row[col["id"]].strip() if "id" in col else str(len(ids))
        if ident in seen:
            raise DataError(f"line {line}: column 'id': {ident!r} already used on line {seen[ident]}")
        seen[ident] = line
        ids.append(ident)
        if has_p:
            p = _number(row[col["pvalue"]], "pvalue", line)
            if not 0 <= p <= 1:
                raise DataError(f"line {line}: column 'pvalue': {p!r} is outside [0, 1]")
            first.append(p)
        else:
            lab = _number(row[col["label"]], "label", line)
            if lab not in (1, -1):
                raise DataError(f"line {line}: column 'label': expected 1 or -1, found {row[col['label']]!r}")
            labels.append(int(lab))
            first.append(_number(row[col["score"]], "score", line, allow_inf=True))
        x.append([_number(row[col[h]], h, line) for h in side])

    if not ids:
        raise DataError(f"{path}: no data rows")
    xm = np.asarray(x, dtype=np.float64).reshape(len(ids), len(side))
    if has_p:
        table = PValueTable(np.asarray(first), xm, ids)
        return ParsedInput("pvalue", table, tuple(side))
    raw = HypothesisTable(np.asarray(labels), np.asarray(first), xm, ids, check_finite=False)
    table = replace_infinite_scores(raw)
    return ParsedInput("competition", table, tuple(side))


def fmt(v) -> str:
    """Shortest round-trip decimal; empty for NaN."""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def write_table(path, data: PValueTable | HypothesisTable, side_names=None) -> None:
    d = data.side_info.shape[1]
    side_names = side_names or [f"{SIDE_PREFIX}{j + 1}" for j in range(d)]
    if isinstance(data, PValueTable):
        header, cols = ["id", "pvalue"], [data.pvalues]
    else:
        header, cols = ["id", "label", "score"], [data.labels, data.scores]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header + list(side_names))
        for i in range(data.n):
            vals = [str(int(c[i])) if c.dtype.kind in "iu" else fmt(c[i]) for c in cols]
            w.writerow([data.ids[i], *vals, *(fmt(v) for v in data.side_info[i])])


def write_truth(path, ids, false_null) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "false_null"])
        for i, f in zip(ids, false_null):
            w.writerow([i, int(bool(f))])


def write_discoveries(path, ids, scores, rescored, discovered) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "score", "rescored", "discovered"])
        for i in range(len(ids)):
            w.writerow([ids[i], fmt(scores[i]), fmt(rescored[i]), int(discovered[i])])
