"""CSV ingestion and JSON/CSV report emission."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .em import FitReport
from .evaluation import ConfusionReport
from .model import CategoricalCoding, Dataset, MixtureParameters, ModelSpec, ZipcwmError
from .selection import CRITERIA, SelectionReport

log = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none", "?"}


class DataError(ZipcwmError, ValueError):
    """Input data could not be read or does not match its schema."""


def fmt(x) -> str:
    """Fixed 17-significant-digit rendering used by every CSV writer."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles for a CSV file.

    ``categorical`` maps a column to its level count, or ``None`` to take the
    number of distinct values. Columns not mentioned are ignored.
    """

    response: str = "y"
    continuous: tuple[str, ...] = ()
    categorical: tuple[tuple[str, int | None], ...] = ()
    true_label: str | None = None
    ignore: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = [self.response, *self.continuous, *(c for c, _ in self.categorical)]
        if self.true_label:
            names.append(self.true_label)
        if len(set(names)) != len(names):
            raise DataError("a column is assigned more than one role")
        for name, r in self.categorical:
            if r is not None and r < 2:
                raise DataError(f"categorical column {name!r} needs at least 2 levels")

    @classmethod
    def simulated(cls, q: int = 3, levels: tuple[int, ...] = (2, 3)) -> "DatasetSchema":
        """Schema of files written by :func:`write_dataset_csv`."""
        return cls(
            response="y",
            continuous=tuple(f"q{j + 1}" for j in range(q)),
            categorical=tuple((f"w{k + 1}", r) for k, r in enumerate(levels)),
            true_label="label",
        )


def _level_codes(values: list[str], declared: int | None, name: str) -> tuple[np.ndarray, int]:
    """1-based codes: integer codes 1..r are kept, 0..r-1 shifted, else ranked."""
    distinct = sorted(set(values))
    try:
        ints = np.array([float(v) for v in values])
        integral = bool(np.all(ints == np.round(ints)))
    except ValueError:
        integral = False
    r = declared if declared is not None else len(distinct)
    if r < 2:
        raise DataError(f"categorical column {name!r} has fewer than 2 levels")
    if integral:
        ints = ints.astype(np.int64)
        if ints.min() >= 1 and ints.max() <= r:
            return ints, r
        if ints.min() >= 0 and ints.max() <= r - 1:
            return ints + 1, r
        distinct_num = sorted(set(ints.tolist()))
        if len(distinct_num) > r:
            raise DataError(f"column {name!r} has more than {r} levels")
        rank = {v: i + 1 for i, v in enumerate(distinct_num)}
        return np.array([rank[v] for v in ints.tolist()], dtype=np.int64), r
    if len(distinct) > r:
        raise DataError(f"column {name!r} has more than {r} levels")
    rank = {v: i + 1 for i, v in enumerate(distinct)}
    return np.array([rank[v] for v in values], dtype=np.int64), r


def load_csv(
    path, schema: DatasetSchema, coding: CategoricalCoding | str = CategoricalCoding.DUMMY
) -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    Rows with a missing cell in a used column, or a non-integer/negative
    response, are dropped with a warning.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            raw = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    except (StopIteration, csv.Error, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc

    header = [h.strip() for h in header]
    used = [schema.response, *schema.continuous, *(c for c, _ in schema.categorical)]
    if schema.true_label:
        used.append(schema.true_label)
    missing_cols = [c for c in used if c not in header]
    if missing_cols:
        raise DataError(f"{path}: columns {missing_cols} not in header {header}")
    col = {name: header.index(name) for name in used}

    kept, dropped = [], 0
    for lineno, row in enumerate(raw, start=2):
        if len(row) != len(header):
            log.warning("%s:%d: wrong number of fields, row dropped", path, lineno)
            dropped += 1
            continue
        cells = {name: row[i].strip() for name, i in col.items()}
        if any(v.lower() in MISSING for v in cells.values()):
            log.warning("%s:%d: missing cell, row dropped", path, lineno)
            dropped += 1
            continue
        try:
            yv = float(cells[schema.response])
            qv = [float(cells[c]) for c in schema.continuous]
        except ValueError:
            log.warning("%s:%d: non-numeric value, row dropped", path, lineno)
            dropped += 1
            continue
        if yv < 0 or yv != round(yv) or not all(math.isfinite(v) for v in qv):
            log.warning("%s:%d: response is not a nonnegative integer, row dropped", path, lineno)
            dropped += 1
            continue
        kept.append((int(yv), qv, cells))
    if not kept:
        raise DataError(f"{path}: no usable rows")
    if dropped:
        log.warning("%s: kept %d rows, dropped %d", path, len(kept), dropped)

    n = len(kept)
    y = np.array([k[0] for k in kept], dtype=np.int64)
    Q = np.array([k[1] for k in kept], dtype=float).reshape(n, len(schema.continuous))
    codes, levels = [], []
    for name, declared in schema.categorical:
        c, r = _level_codes([k[2][name] for k in kept], declared, name)
        codes.append(c)
        levels.append(r)
    codes_arr = np.column_stack(codes) if codes else np.zeros((n, 0), dtype=np.int64)
    labels = None
    if schema.true_label:
        try:
            labels = np.array([int(float(k[2][schema.true_label])) for k in kept])
        except ValueError as exc:
            raise DataError(f"{path}: labels must be integers") from exc
    try:
        return Dataset.from_codes(y, Q, codes_arr, levels, coding, labels)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_dataset_csv(path, data: Dataset) -> None:
    """Write ``y, q1.., w1.. (1-based codes)[, label]``."""
    header = ["y", *(f"q{j + 1}" for j in range(data.q)), *(f"w{k + 1}" for k in range(len(data.W)))]
    has_labels = data.true_labels is not None
    if has_labels:
        header.append("label")
    codes = data.codes
    rows = []
    for i in range(data.n):
        row = [int(data.y[i]), *data.Q[i].tolist(), *codes[i].tolist()]
        if has_labels:
            row.append(int(data.true_labels[i]))
        rows.append(row)
    write_csv(Path(path), header, rows)


def read_labels_csv(path, true_col: str = "true", pred_col: str = "predicted"):
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    if not rows or true_col not in rows[0] or pred_col not in rows[0]:
        raise DataError(f"{path}: need columns {true_col!r} and {pred_col!r}")
    try:
        t = np.array([int(r[true_col]) for r in rows])
        p = np.array([int(r[pred_col]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: labels must be integers") from exc
    return t, p


# --------------------------------------------------------------------------
# reports


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "family": spec.family.value,
        "G": spec.G,
        "covariance_structure": spec.covariance_structure.value,
        "categorical_coding": spec.categorical_coding.value,
    }


def params_to_dict(params: MixtureParameters) -> dict:
    return {
        "pi": params.pi,
        "components": [
            {"beta": c.beta, "mu": c.mu, "sigma": c.sigma, "alpha": list(c.alpha)}
            for c in params.components
        ],
    }


def fit_to_dict(report: FitReport) -> dict:
    return {
        "spec": spec_to_dict(report.spec),
        "params": params_to_dict(report.params),
        "final_loglik": report.final_loglik,
        "converged": report.converged,
        "iterations_used": report.iterations_used,
        "restart_index_of_best": report.restart_index_of_best,
        "restart_failures": [list(f) for f in report.restart_failures],
        "diagnostics": report.diagnostics,
        "cluster_sizes": np.bincount(report.map_labels, minlength=report.spec.G + 1)[1:],
    }


def selection_to_dict(report: SelectionReport) -> dict:
    return {
        "rows": [row.__dict__ for row in report.rows],
        "chosen_G_per_criterion": report.chosen_G_per_criterion,
        "fits": {G: fit_to_dict(f) for G, f in report.fit_reports.items()},
        "failures": report.failures,
    }


SELECTION_HEADER = ["G", "loglik", "k", "n", *CRITERIA]


def selection_rows(report: SelectionReport) -> list[list]:
    return [[r.G, r.loglik, r.k, r.n, *(r.value(c) for c in CRITERIA)] for r in report.rows]


def emit_reports(reports: Mapping[str, object], out_dir) -> list[Path]:
    """Write each named report; returns the files written, in order.

    Fit reports give ``<name>.json`` plus ``<name>_trace.csv``; selection and
    confusion reports give ``<name>.json`` plus ``<name>.csv``.
    """
    written: list[Path] = []
    if not reports:
        return written
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, report in reports.items():
            if isinstance(report, FitReport):
                write_json(out / f"{name}.json", fit_to_dict(report))
                write_csv(
                    out / f"{name}_trace.csv",
                    ["iteration", "loglik"],
                    enumerate(report.loglik_trace.tolist()),
                )
                written += [out / f"{name}.json", out / f"{name}_trace.csv"]
            elif isinstance(report, SelectionReport):
                write_json(out / f"{name}.json", selection_to_dict(report))
                write_csv(out / f"{name}.csv", SELECTION_HEADER, selection_rows(report))
                written += [out / f"{name}.json", out / f"{name}.csv"]
            elif isinstance(report, ConfusionReport):
                write_json(out / f"{name}.json", report.to_dict())
                G = report.matrix.shape[0]
                write_csv(
                    out / f"{name}.csv",
                    ["true", *(f"pred_{g}" for g in range(1, G + 1)), "misclassification"],
                    (
                        [g + 1, *report.matrix[g].tolist(), report.per_class_misclassification[g]]
                        for g in range(G)
                    ),
                )
                written += [out / f"{name}.json", out / f"{name}.csv"]
            else:
                raise TypeError(f"cannot emit report of type {type(report).__name__}")
    except OSError as exc:
        raise DataError(f"cannot write reports to {out}: {exc}") from exc
    return written


def default_output_dir() -> Path:
    return Path(os.environ.get("ZIPCWM_OUTPUT_DIR", "zipcwm-out"))
