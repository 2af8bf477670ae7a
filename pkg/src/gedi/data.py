"""Datasets: CSV loading and export, the synthetic sine-plus-square task, k-fold splits."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from .errors import MissingColumn, ParseError, SpecError, TooFewRows
from .indicators import CLASSIFICATION, REGRESSION

log = logging.getLogger(__name__)

MISSING = frozenset({"", "na", "nan", "?", "null", "none"})
TASK_ALIASES = {
    "reg": REGRESSION,
    "regression": REGRESSION,
    "clf": CLASSIFICATION,
    "classification": CLASSIFICATION,
}


def normalize_task(task: str | None) -> str | None:
    if task is None:
        return None
    try:
        return TASK_ALIASES[task.lower()]
    except KeyError:
        raise SpecError(f"unknown task {task!r}; use reg or clf") from None


@dataclass
class Dataset:
    features: np.ndarray
    protected: np.ndarray
    target: np.ndarray
    task: str
    feature_names: list[str]
    protected_name: str
    target_name: str
    dropped: int = 0
    encodings: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        n = self.target.shape[0]
        if self.features.shape[0] != n or self.protected.shape[0] != n:
            raise SpecError("features, protected attribute and target differ in length")
        if self.features.shape[1] != len(self.feature_names):
            raise SpecError("feature names do not match the feature matrix")
        if self.task == CLASSIFICATION and not np.all((self.target == 0) | (self.target == 1)):
            raise SpecError("classification targets must be 0 or 1")

    @property
    def n(self) -> int:
        return int(self.target.shape[0])

    def subset(self, idx: np.ndarray) -> Dataset:
        return Dataset(
            self.features[idx],
            self.protected[idx],
            self.target[idx],
            self.task,
            list(self.feature_names),
            self.protected_name,
            self.target_name,
            encodings=dict(self.encodings),
        )

    def with_target(self, target: np.ndarray) -> Dataset:
        """Copy with a replaced target; the feature column of a protected target stays as is."""
        return Dataset(
            self.features.copy(),
            self.protected.copy(),
            np.asarray(target, dtype=float).copy(),
            self.task,
            list(self.feature_names),
            self.protected_name,
            self.target_name,
            encodings=dict(self.encodings),
        )


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING


def _numeric(cells: list[str]) -> np.ndarray | None:
    out = np.empty(len(cells))
    for i, c in enumerate(cells):
        if _is_missing(c):
            out[i] = np.nan
            continue
        try:
            out[i] = float(c)
        except ValueError:
            return None
    return out


def _binary_code(name: str, cells: list[str], rows: list[int]) -> tuple[np.ndarray, list[str] | None]:
    """Numeric column for the protected attribute or target.

    Text columns with exactly two values are coded 0/1 in sorted order.
    """
    values = _numeric(cells)
    if values is not None:
        return values, None
    levels = sorted({c.strip() for c in cells if not _is_missing(c)})
    if len(levels) != 2:
        for c, line in zip(cells, rows):
            if not _is_missing(c):
                try:
                    float(c)
                except ValueError:
                    raise ParseError(f"non-numeric value {c!r}", line=line, column=name) from None
    code = {lvl: float(i) for i, lvl in enumerate(levels)}
    return np.array([np.nan if _is_missing(c) else code[c.strip()] for c in cells]), levels


def load_dataset(
    path: str | Path,
    protected: str,
    target: str,
    task: str | None = None,
    protected_as_feature: bool = True,
) -> Dataset:
    """Read a CSV with a header row.

    Numeric feature columns keep their values, with missing cells set to the
    column median. Text columns are one-hot encoded as ``name=value``.
    Rows whose protected attribute or target is missing are dropped and
    counted in ``Dataset.dropped``. Without an explicit ``task`` a target that
    only holds 0 and 1 is treated as classification.
    """
    task = normalize_task(task)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty", line=1) from None
        body, lines = [], []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}", line=reader.line_num)
            body.append(row)
            lines.append(reader.line_num)
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", line=1)
    for col in (protected, target):
        if col not in header:
            raise MissingColumn(f"column {col!r} not found; available: {header}")
    columns = {h: [r[j] for r in body] for j, h in enumerate(header)}

    encodings = {}
    prot, lv = _binary_code(protected, columns[protected], lines)
    if lv:
        encodings[protected] = lv
    y, lv = _binary_code(target, columns[target], lines)
    if lv:
        encodings[target] = lv
    keep = ~(np.isnan(prot) | np.isnan(y))
    dropped = int(np.sum(~keep))
    if dropped:
        log.info("dropped %d row(s) with a missing protected attribute or target", dropped)
    prot, y = prot[keep], y[keep]
    if y.size == 0:
        raise ParseError("no rows left after dropping missing protected/target values")

    names, cols = [], []
    for h in header:
        if h == target or (h == protected and not protected_as_feature):
            continue
        if h == protected:
            names.append(h)
            cols.append(prot)
            continue
        cells = [c for c, k in zip(columns[h], keep) if k]
        values = _numeric(cells)
        if values is not None:
            if np.all(np.isnan(values)):
                raise ParseError("column has no values", column=h)
            values[np.isnan(values)] = np.nanmedian(values)
            names.append(h)
            cols.append(values)
            continue
        stripped = [c.strip() for c in cells]
        for lvl in sorted({c for c in stripped if not _is_missing(c)}):
            names.append(f"{h}={lvl}")
            cols.append(np.array([1.0 if c == lvl else 0.0 for c in stripped]))
    features = np.column_stack(cols) if cols else np.empty((y.size, 0))

    binary = bool(np.all((y == 0) | (y == 1)))
    if task is None:
        task = CLASSIFICATION if binary else REGRESSION
    elif task == CLASSIFICATION and not binary:
        raise ParseError("classification target must hold only 0 and 1", column=target)
    return Dataset(features, prot, y, task, names, protected, target, dropped, encodings)


def export_dataset(ds: Dataset, dest: str | Path | TextIO) -> None:
    """Write ``ds`` as CSV to a path or text stream, with round-trip float formatting."""
    header = list(ds.feature_names)
    cols = [ds.features[:, j] for j in range(ds.features.shape[1])]
    if ds.protected_name not in header:
        header.append(ds.protected_name)
        cols.append(ds.protected)
    header.append(ds.target_name)
    cols.append(ds.target)
    if hasattr(dest, "write"):
        _write_rows(dest, header, cols)
        return
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, cols)


def _write_rows(fh: TextIO, header: list[str], cols: list[np.ndarray]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])


def synth_fig2(n: int = 500, seed: int = 0) -> Dataset:
    """``y = 4 sin(x) + x^2 + eps`` with ``x ~ U(-pi, pi)`` and ``eps ~ N(0, 1)``.

    ``x`` is both the only feature and the protected attribute.
    """
    if n < 10:
        raise SpecError("the synthetic task needs n >= 10")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, n)
    y = 4.0 * np.sin(x) + x**2 + rng.normal(0.0, 1.0, n)
    return Dataset(x[:, None], x.copy(), y, REGRESSION, ["x"], "x", "y")


def kfold_split(n: int, folds: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled partition of ``range(n)`` into ``folds`` validation sets.

    Returns ``(train, validation)`` index pairs, each sorted.
    """
    if folds < 2:
        raise SpecError("need at least two folds")
    if n < folds:
        raise TooFewRows(f"cannot split {n} rows into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    out = []
    for val in np.array_split(perm, folds):
        mask = np.ones(n, dtype=bool)
        mask[val] = False
        out.append((np.flatnonzero(mask), np.sort(val)))
    return out
