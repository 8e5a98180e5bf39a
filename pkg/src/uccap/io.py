"""CSV/JSON ingestion and report writers."""

import csv
import json
import math
from collections import OrderedDict

import numpy as np

from .capability import DimensionSample, SpecLimits
from .exceptions import EmptyDimension, InconsistentSpec, ParseError, UCCapError

MEASUREMENT_COLUMNS = ("dim_id", "value", "lsl", "usl", "nominal")


def _float_or_none(text, line, column):
    text = text.strip() if text is not None else ""
    if text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: {text!r} is not a number", line=line) from None
    if not math.isfinite(v):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", line=line)
    return v


def read_rows(path):
    """``(header, [(line_number, row_dict), ...])`` of a UTF-8 CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        rows = []
        for row in reader:
            if None in row:
                raise ParseError("too many fields", line=reader.line_num)
            rows.append((reader.line_num, row))
    return header, rows


def is_measurement_file(header):
    return "value" in header


def ingest_csv(path):
    """Grouped measurement samples from a long-format CSV.

    One row per measurement with header ``dim_id,value,lsl,usl,nominal``.
    Limits may be empty but must agree across all rows of a dimension.  A row
    with an empty value only carries specification information.
    """
    header, rows = read_rows(path)
    missing = [c for c in MEASUREMENT_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing column(s) {missing}; expected header {','.join(MEASUREMENT_COLUMNS)}", line=1)
    groups = OrderedDict()
    for line, row in rows:
        dim = (row["dim_id"] or "").strip()
        if not dim:
            raise ParseError("empty dim_id", line=line)
        limits = tuple(_float_or_none(row[c], line, c) for c in ("lsl", "usl", "nominal"))
        value = _float_or_none(row["value"], line, "value")
        g = groups.get(dim)
        if g is None:
            g = groups[dim] = {"limits": limits, "values": [], "line": line}
        elif limits != g["limits"]:
            raise InconsistentSpec(
                f"dimension {dim!r}: limits {limits} differ from {g['limits']} set on line {g['line']}", line=line
            )
        if value is not None:
            g["values"].append(value)
    samples = []
    for dim, g in groups.items():
        if not g["values"]:
            raise EmptyDimension(f"dimension {dim!r} (line {g['line']}) has no measurements")
        lsl, usl, nominal = g["limits"]
        try:
            spec = SpecLimits(lsl, usl, nominal)
            samples.append(DimensionSample(dim, np.array(g["values"]), spec))
        except UCCapError as exc:
            raise type(exc)(f"dimension {dim!r} (first seen on line {g['line']}): {exc}") from None
    return samples


def read_assessment_inputs(path):
    """Rows of precomputed inputs: ``dim_id`` plus either ``pi`` or
    ``cpk_hat,se`` (optionally ``residual``, ``normality_pass``, ``skewness``,
    ``rel_position``)."""
    header, rows = read_rows(path)
    if "dim_id" not in header or not ("pi" in header or {"cpk_hat", "se"} <= set(header)):
        raise ParseError("expected columns dim_id and either pi or cpk_hat,se", line=1)
    out = []
    for line, row in rows:
        rec = {"dim_id": (row["dim_id"] or "").strip(), "line": line}
        if not rec["dim_id"]:
            raise ParseError("empty dim_id", line=line)
        for col in ("pi", "cpk_hat", "se", "residual", "skewness", "rel_position"):
            if col in row:
                rec[col] = _float_or_none(row[col], line, col)
        if "normality_pass" in row and (row["normality_pass"] or "").strip():
            text = row["normality_pass"].strip().lower()
            if text not in ("1", "0", "true", "false", "pass", "fail"):
                raise ParseError(f"normality_pass must be pass/fail or 1/0, got {text!r}", line=line)
            rec["normality_pass"] = text in ("1", "true", "pass")
        if rec.get("pi") is None and (rec.get("cpk_hat") is None or rec.get("se") is None):
            raise ParseError("row needs pi or both cpk_hat and se", line=line)
        out.append(rec)
    return out


# ------------------------------------------------------------------ writers


def format_value(v):
    """Full-precision text: ``repr`` of floats round-trips exactly."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", line=exc.lineno) from None
