"""Core domain types and file ingestion.

All types are immutable after construction (backing arrays are marked
read-only), so they can be shared freely across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed or invalid input data (files, labels, matrices)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or produced invalid output."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with dense 0-based integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if features.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DataError("labels must be a vector with one entry per row")
        if not np.all(np.isfinite(features)):
            bad = np.argwhere(~np.isfinite(features))[0]
            raise DataError(
                f"non-finite feature value at row {bad[0] + 1}, column {bad[1] + 1}"
            )
        c = int(self.class_count)
        if c < 2:
            raise DataError("at least two classes are required")
        if labels.size and (labels.min() < 0 or labels.max() >= c):
            raise DataError(f"labels must lie in [0, {c})")
        counts = np.bincount(labels, minlength=c)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise DataError(f"class {missing[0]} has no instances")
        names = self.label_names or tuple(str(k) for k in range(c))
        if len(names) != c:
            raise DataError("label_names length must equal class_count")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "class_count", c)
        object.__setattr__(self, "label_names", tuple(names))

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-instance, per-class confidence scores (rows = instances)."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[1] < 2:
            raise DataError("score matrix must be 2-dimensional with >= 2 columns")
        if not np.all(np.isfinite(scores)):
            bad = np.argwhere(~np.isfinite(scores))[0]
            raise DataError(
                f"non-finite score at row {bad[0] + 1}, column {bad[1] + 1}"
            )
        object.__setattr__(self, "scores", _frozen(scores))

    @property
    def n_instances(self) -> int:
        return self.scores.shape[0]

    @property
    def class_count(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class CostMatrix:
    """Square misclassification cost table; entry (i, j) is the cost of
    classifying a class-i instance as class j. The diagonal is zero."""

    costs: np.ndarray

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 2 or costs.shape[0] != costs.shape[1]:
            raise DataError("cost matrix must be square")
        if costs.shape[0] < 2:
            raise DataError("cost matrix needs at least two classes")
        if np.any(np.diag(costs) != 0.0):
            raise DataError("cost matrix diagonal must be exactly zero")
        off = costs[~np.eye(costs.shape[0], dtype=bool)]
        if not np.all(np.isfinite(off)) or np.any(off < 0):
            raise DataError("off-diagonal costs must be finite and non-negative")
        object.__setattr__(self, "costs", _frozen(costs))

    @property
    def class_count(self) -> int:
        return self.costs.shape[0]


@dataclass(frozen=True)
class PriorVector:
    """Class prior probabilities; strictly positive, summing to one."""

    priors: np.ndarray

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        if priors.ndim != 1 or priors.size < 2:
            raise DataError("priors must be a vector of length >= 2")
        if np.any(priors <= 0) or not np.all(np.isfinite(priors)):
            raise DataError("every prior must be positive and finite")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise DataError("priors must sum to 1 within 1e-12")
        object.__setattr__(self, "priors", _frozen(priors))

    @property
    def class_count(self) -> int:
        return self.priors.shape[0]


@dataclass(frozen=True)
class LabelAssignment:
    """Discrete classifier output: one class index per instance."""

    predictions: np.ndarray
    class_count: int

    def __post_init__(self):
        predictions = np.asarray(self.predictions, dtype=int)
        if predictions.ndim != 1:
            raise DataError("predictions must be a vector")
        c = int(self.class_count)
        if predictions.size and (predictions.min() < 0 or predictions.max() >= c):
            raise DataError(f"predictions must lie in [0, {c})")
        object.__setattr__(self, "predictions", _frozen(predictions))
        object.__setattr__(self, "class_count", c)

    @property
    def n_instances(self) -> int:
        return self.predictions.shape[0]


def load_dataset(path: str | Path, label_column: str) -> LabeledDataset:
    """Load a labeled dataset from a CSV file with a header row.

    The column named ``label_column`` holds string or integer class labels;
    every other column must be numeric. Labels are re-encoded to dense
    0-based indices in first-appearance order and the original names are
    retained in ``label_names``. Missing or non-numeric feature cells are
    rejected with an error naming the offending row.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header")
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            label = row[label_idx].strip()
            if not label:
                raise DataError(f"{path}: row {row_no} has an empty label")
            values = []
            for i in feature_idx:
                cell = row[i].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {header[i]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(
                        f"{path}: row {row_no}, column {header[i]!r}: "
                        f"non-finite value {cell!r}"
                    )
                values.append(value)
            rows.append(values)
            raw_labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    encoding: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=int)
    for i, name in enumerate(raw_labels):
        if name not in encoding:
            encoding[name] = len(encoding)
        labels[i] = encoding[name]
    if len(encoding) < 2:
        raise DataError(f"{path}: need at least two distinct classes")
    return LabeledDataset(
        features=np.array(rows, dtype=float),
        labels=labels,
        class_count=len(encoding),
        label_names=tuple(encoding),
    )


def load_score_matrix(path: str | Path) -> ScoreMatrix:
    """Load a score matrix from a headerless CSV of n rows by c columns."""
    path = Path(path)
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{path}: row {row_no} has {len(row)} columns, "
                    f"expected {len(rows[0])}"
                )
            values = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell.strip()!r} at "
                        f"row {row_no}, column {col_no}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(
                        f"{path}: non-finite value at row {row_no}, column {col_no}"
                    )
                values.append(value)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: empty score matrix")
    return ScoreMatrix(np.array(rows, dtype=float))


def save_score_matrix(matrix: ScoreMatrix, path: str | Path) -> None:
    """Write a score matrix as headerless CSV with round-trip-exact decimals."""
    with open(path, "w", newline="") as fh:
        for row in matrix.scores:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_cost_matrix(path: str | Path) -> CostMatrix:
    """Load a cost matrix from a JSON object with a "costs" key."""
    path = Path(path)
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict) or "costs" not in payload:
        raise DataError(f"{path}: expected a JSON object with a 'costs' key")
    try:
        return CostMatrix(np.array(payload["costs"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def save_cost_matrix(
    matrix: CostMatrix, path: str | Path, metadata: dict | None = None
) -> None:
    """Write a cost matrix JSON; extra metadata keys ride along."""
    payload = dict(metadata or {})
    payload["costs"] = [[float(v) for v in row] for row in matrix.costs]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_labels(path: str | Path, class_count: int | None = None) -> np.ndarray:
    """Load integer class indices, one per line (CSV with a single column)."""
    path = Path(path)
    values: list[int] = []
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            cell = row[0].strip()
            try:
                values.append(int(cell))
            except ValueError:
                raise DataError(
                    f"{path}: row {row_no}: label {cell!r} is not an integer"
                ) from None
    if not values:
        raise DataError(f"{path}: no labels")
    labels = np.array(values, dtype=int)
    if labels.min() < 0:
        raise DataError(f"{path}: negative label {labels.min()}")
    if class_count is not None and labels.max() >= class_count:
        raise DataError(
            f"{path}: label {labels.max()} out of range for {class_count} classes"
        )
    return labels


def save_labels(labels: np.ndarray, path: str | Path) -> None:
    with open(path, "w") as fh:
        for value in labels:
            fh.write(f"{int(value)}\n")


def empirical_priors(labels: np.ndarray, class_count: int) -> PriorVector:
    """Estimate class priors as count(i)/n. Every class must occur."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise DataError("cannot estimate priors from an empty label vector")
    counts = np.bincount(labels, minlength=class_count)
    if len(counts) > class_count:
        raise DataError(f"label {labels.max()} out of range for {class_count} classes")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DataError(f"class {missing[0]} has zero instances")
    return PriorVector(counts / labels.size)
