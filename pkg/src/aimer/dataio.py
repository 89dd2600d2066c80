"""Matrix ingestion and result serialization.

CSV/TSV layout: first row is a header of column labels; an optional first
column of row ids is detected when (a) data rows carry one more field than
the header, (b) the first header cell is empty, or (c) every first field is
non-numeric while the widths match the header.  All numbers serialize with
17 significant digits so re-parsing reproduces them bit for bit; emitted
JSON and CSV artifacts embed the run configuration that produced them.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, ValidationError
from .estimators import FitResult
from .runners import ExperimentReport


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(jsonable(value), sort_keys=True)
    return str(value)


def jsonable(value):
    """Recursively convert numpy containers/scalars for json.dump."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _delimiter(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "tsv"):
            raise ValidationError(f"unknown format {fmt!r}; use csv or tsv")
        return "," if fmt == "csv" else "\t"
    return "\t" if str(path).lower().endswith(".tsv") else ","


def _is_numeric(field):
    try:
        float(field)
        return True
    except ValueError:
        return False


def load_matrix(path, fmt=None):
    """Read a labelled numeric matrix; returns (matrix, labels, row_ids)."""
    path = Path(path)
    delim = _delimiter(path, fmt)
    with open(path, newline="") as handle:
        reader = csv.reader(handle, delimiter=delim)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = [(reader.line_num, row) for row in reader if row]
    if not rows:
        raise ParseError(f"{path}: no data rows after the header")
    header = [h.strip() for h in header]
    width = len(rows[0][1])
    if width == len(header) + 1:
        has_ids, labels = True, header
    elif width == len(header):
        if header and header[0] == "":
            has_ids, labels = True, header[1:]
        elif all(not _is_numeric(row[0]) for _, row in rows):
            has_ids, labels = True, header[1:]
        else:
            has_ids, labels = False, header
    else:
        raise ParseError(
            f"{path}: line {rows[0][0]}: expected {len(header)} or "
            f"{len(header) + 1} fields, got {width}"
        )
    values = np.empty((len(rows), len(labels)))
    row_ids = [] if has_ids else None
    for i, (line_num, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"{path}: line {line_num}: expected {width} fields, got {len(row)}"
            )
        fields = row[1:] if has_ids else row
        if has_ids:
            row_ids.append(row[0])
        for k, fld in enumerate(fields):
            try:
                values[i, k] = float(fld)
            except ValueError:
                col = k + 2 if has_ids else k + 1
                raise ParseError(
                    f"{path}: line {line_num}, column {col}: "
                    f"non-numeric value {fld!r}"
                ) from None
    if len(set(labels)) != len(labels):
        raise ValidationError(f"{path}: duplicate column labels")
    return values, labels, row_ids


def load_vector(path, fmt=None):
    """Read a single-column response file; returns (vector, row_ids)."""
    matrix, labels, row_ids = load_matrix(path, fmt)
    if matrix.shape[1] != 1:
        raise ValidationError(
            f"{path}: expected a single response column, found {len(labels)}"
        )
    return matrix[:, 0], row_ids


def fit_to_dict(fit, config=None, labels=None):
    """Self-contained JSON form of a fit (sparse coefficient pairs)."""
    pairs = [[int(j), float(fit.beta[j])] for j in fit.selected_genes]
    out = {
        "method": fit.method,
        "beta": pairs,
        "p": int(fit.beta.size),
        "intercept": float(fit.intercept),
        "hyperparams": jsonable(fit.hyperparams),
        "selectedGenes": [int(j) for j in fit.selected_genes],
        "columnMeans": [float(v) for v in fit.column_means],
        "config": jsonable(config or {}),
    }
    if labels is not None:
        out["labels"] = [str(l) for l in labels]
    return out


def fit_from_dict(payload):
    """Rebuild a FitResult (and labels, if stored) from its JSON form."""
    try:
        p = int(payload["p"])
        beta = np.zeros(p)
        for j, value in payload["beta"]:
            beta[int(j)] = float(value)
        fit = FitResult(
            method=payload["method"],
            beta=beta,
            intercept=float(payload["intercept"]),
            hyperparams=dict(payload["hyperparams"]),
            column_means=np.asarray(payload["columnMeans"], dtype=float),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed fit payload: {exc}") from None
    if fit.column_means.size != p:
        raise DimensionError("columnMeans length does not match p")
    return fit, payload.get("labels")


def write_json(payload, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_json(path):
    with open(path) as handle:
        return json.load(handle)


def write_rows_csv(path, rows, fieldnames, config=None):
    """CSV with a leading '# config: ...' comment carrying the run config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        if config is not None:
            handle.write("# config: " + json.dumps(jsonable(config), sort_keys=True)
                         + "\n")
        writer = csv.writer(handle)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(name)) for name in fieldnames])
    return path


def read_rows_csv(path):
    """Round-trip reader for our own CSVs: floats parsed, '' back to None."""
    with open(path, newline="") as handle:
        lines = [ln for ln in handle if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for row in reader:
        record = {}
        for name, field in zip(header, row):
            if field == "":
                record[name] = None
            elif _is_numeric(field):
                value = float(field)
                record[name] = int(value) if value.is_integer() and "." not in field \
                    and "e" not in field.lower() else value
            else:
                record[name] = field
        rows.append(record)
    return rows


REPORT_CSV_TABLES = {
    "method_rows": "methods",
    "replication_rows": "replications",
    "roc_rows": "roc",
    "coefficient_rows": "coefficients",
}


def write_report(report, out_dir):
    """Emit report.json plus one CSV per populated table; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [write_json(report.to_dict(), out_dir / "report.json")]
    for attr, stem in REPORT_CSV_TABLES.items():
        rows = getattr(report, attr)
        if not rows:
            continue
        fieldnames = list(rows[0].keys())
        paths.append(
            write_rows_csv(out_dir / f"{stem}.csv", rows, fieldnames, report.config)
        )
    return paths


def emit_report(obj, path, fmt="json", config=None, labels=None):
    """Serialize a FitResult or ExperimentReport to JSON or CSV files."""
    fmt = fmt.lower()
    if fmt not in ("json", "csv"):
        raise ValidationError(f"unknown format {fmt!r}; use json or csv")
    if isinstance(obj, FitResult):
        if fmt == "json":
            return [write_json(fit_to_dict(obj, config, labels), path)]
        rows = [
            {"index": int(j),
             "label": labels[j] if labels is not None else f"col{j}",
             "beta": float(obj.beta[j])}
            for j in obj.selected_genes
        ]
        return [write_rows_csv(path, rows, ["index", "label", "beta"], config)]
    if isinstance(obj, ExperimentReport):
        if fmt == "json":
            return [write_json(obj.to_dict(), path)]
        return write_report(obj, path)
    raise ValidationError(f"cannot serialize object of type {type(obj).__name__}")
