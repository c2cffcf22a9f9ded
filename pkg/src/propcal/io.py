"""CSV readers/writers and the flat key=value config format.

Floats are written with ``repr`` (shortest round-trip decimal), so files
are byte-stable across runs and platforms and read back bit-exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .calibration import CalibrationCurve, LoessFit
from .dgp import SyntheticDataset
from .errors import ConfigError, ParseError
from .experiments import Condition, ExperimentRow, SlopeSummary

DATASET_COLUMNS = ("x1", "x2", "x3", "x4", "a", "y", "y0", "y1", "pi_true")
RESERVED = ("a", "y", "y0", "y1", "pi_true")
ROW_COLUMNS = ("condition", "replicate", "stage", "ici", "ate_error", "max_asmd", "ate_hat")
SLOPE_COLUMNS = ("condition", "q1", "median", "q3", "n_valid", "median_delta_ici",
                 "median_delta_ate_error")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class IngestedDataset:
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    covariate_names: tuple = ()
    true_propensity: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None

    @property
    def n(self):
        return len(self.treatment)

    @property
    def true_ate(self):
        if self.y0 is None or self.y1 is None:
            return None
        return float(np.mean(self.y1 - self.y0))


def _write(path, header, rows):
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_dataset_csv(data: SyntheticDataset, path):
    cols = [*data.covariates.T, data.treatment, data.outcome, data.y0, data.y1,
            data.true_propensity]
    rows = ([fmt(c[i]) for c in cols] for i in range(data.n))
    _write(path, DATASET_COLUMNS, rows)


def _read_table(path):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ParseError(f"{path}: empty file, expected a header row")
            header = [h.strip() for h in header]
            body = list(reader)
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    return path, header, body


def read_dataset_csv(path) -> IngestedDataset:
    """Read a dataset; ``a`` and ``y`` are required, every non-reserved column is a covariate."""
    path, header, body = _read_table(path)
    for required in ("a", "y"):
        if required not in header:
            raise ParseError(f"{path}: missing required column {required!r}")
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2  # 1-based, after the header
        if len(row) != len(header):
            raise ParseError(f"{path}: row {line} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {header[j]!r}: "
                                 f"non-numeric value {cell!r}") from None
    col = {name: values[:, j] for j, name in enumerate(header)}
    a = col["a"]
    bad = np.flatnonzero((a != 0) & (a != 1))
    if len(bad):
        raise ParseError(f"{path}: row {bad[0] + 2}, column 'a': treatment must be 0 or 1, "
                         f"got {body[bad[0]][header.index('a')]!r}")
    names = tuple(h for h in header if h not in RESERVED)
    X = np.column_stack([col[h] for h in names]) if names else np.empty((len(body), 0))
    y0, y1 = col.get("y0"), col.get("y1")
    if (y0 is None) != (y1 is None):
        raise ParseError(f"{path}: y0 and y1 must be given together")
    if y0 is not None:
        mismatch = np.flatnonzero(col["y"] != np.where(a == 1, y1, y0))
        if len(mismatch):
            raise ParseError(f"{path}: row {mismatch[0] + 2}: observed y does not match "
                             "the potential outcome of the assigned treatment")
    return IngestedDataset(X, a.astype(np.int64), col["y"], names, col.get("pi_true"), y0, y1)


def write_results_csv(items: Sequence, path):
    """Write ExperimentRow or SlopeSummary records (header only for an empty list)."""
    items = list(items)
    if items and isinstance(items[0], SlopeSummary):
        _write(path, SLOPE_COLUMNS, ([str(s.condition), fmt(s.q1), fmt(s.median), fmt(s.q3),
                                      fmt(s.n_valid), fmt(s.median_delta_ici),
                                      fmt(s.median_delta_ate_error)] for s in items))
    else:
        _write(path, ROW_COLUMNS, ([str(r.condition), fmt(r.replicate), r.stage, fmt(r.ici),
                                    fmt(r.ate_error), fmt(r.max_asmd), fmt(r.ate_hat)]
                                   for r in items))


def write_slopes_csv(summaries, path):
    if summaries:
        write_results_csv(summaries, path)
    else:
        _write(path, SLOPE_COLUMNS, [])


def _records(path, expected):
    path, header, body = _read_table(path)
    missing = [c for c in expected if c not in header]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    idx = {c: header.index(c) for c in expected}
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}")
        yield i + 2, {c: row[idx[c]] for c in expected}


def _num(path, line, name, text, cast=float):
    try:
        return cast(text)
    except ValueError:
        raise ParseError(f"{path}: row {line}, column {name!r}: bad value {text!r}") from None


def read_results_csv(path) -> List[ExperimentRow]:
    rows = []
    for line, rec in _records(path, ROW_COLUMNS):
        try:
            cond = Condition.parse(rec["condition"])
        except ValueError as exc:
            raise ParseError(f"{path}: row {line}: {exc}") from None
        if rec["stage"] not in ("pre", "post"):
            raise ParseError(f"{path}: row {line}, column 'stage': expected pre/post, "
                             f"got {rec['stage']!r}")
        rows.append(ExperimentRow(
            _num(path, line, "replicate", rec["replicate"], int), cond, rec["stage"],
            *(_num(path, line, c, rec[c]) for c in ("ici", "ate_error", "max_asmd", "ate_hat"))))
    return rows


def read_slopes_csv(path) -> List[SlopeSummary]:
    out = []
    for line, rec in _records(path, SLOPE_COLUMNS):
        out.append(SlopeSummary(
            Condition.parse(rec["condition"]),
            *(_num(path, line, c, rec[c]) for c in ("q1", "median", "q3")),
            _num(path, line, "n_valid", rec["n_valid"], int),
            *(_num(path, line, c, rec[c]) for c in ("median_delta_ici", "median_delta_ate_error"))))
    return out


def write_scores_csv(labels, columns: Dict[str, np.ndarray], path):
    """Per-individual score table: ``a`` then one column per named score vector."""
    names = list(columns)
    cols = [np.asarray(labels)] + [np.asarray(columns[k]) for k in names]
    rows = ([fmt(c[i]) for c in cols] for i in range(len(labels)))
    _write(path, ["a", *names], rows)


def read_scores_csv(path):
    path, header, body = _read_table(path)
    if "a" not in header:
        raise ParseError(f"{path}: missing required column 'a'")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        for j, cell in enumerate(row):
            values[i, j] = _num(path, i + 2, header[j], cell)
    cols = {h: values[:, j] for j, h in enumerate(header)}
    labels = cols.pop("a")
    return labels, cols


def write_curves_csv(curves: Dict[str, CalibrationCurve], path):
    rows = []
    for name, c in curves.items():
        for b in range(len(c.bin_counts)):
            rows.append([name, fmt(b), fmt(c.bin_edges[b]), fmt(c.bin_edges[b + 1]),
                         fmt(c.bin_counts[b]), fmt(c.mean_predicted[b]), fmt(c.observed_rate[b])])
    _write(path, ("score", "bin", "lower", "upper", "count", "mean_predicted", "observed_rate"),
           rows)


def write_loess_csv(fits: Dict[str, LoessFit], path):
    rows = [[name, fmt(x), fmt(y)] for name, f in fits.items() for x, y in zip(f.eval_x, f.eval_y)]
    _write(path, ("score", "x", "smoothed"), rows)


def read_config(path) -> Dict[str, str]:
    """Parse a UTF-8 ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
