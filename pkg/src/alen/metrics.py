"""Accuracy matrix over a domain stream, average accuracy, forgetting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from alen.exceptions import EstimationError, ShapeError


def accuracy(predictions, labels) -> float:
    """Fraction of rows where prediction equals label.  Predictions of a
    class absent from the labels (e.g. the out-of-distribution slot on a
    real-labeled test set) simply count as errors."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ShapeError("predictions and labels differ in length")
    if predictions.size == 0:
        raise ShapeError("cannot score an empty batch")
    return float(np.mean(predictions == labels))


@dataclass
class AccuracyMatrix:
    """Row i: accuracy of the model after increment i on every past
    domain j <= i's test split.  Rows only append."""

    rows: list[list[float]] = field(default_factory=list)

    def append_row(self, accuracies: list[float]) -> None:
        if len(accuracies) != len(self.rows) + 1:
            raise ShapeError(f"row {len(self.rows)} must have "
                             f"{len(self.rows) + 1} entries, "
                             f"got {len(accuracies)}")
        for a in accuracies:
            if not 0.0 <= a <= 1.0:
                raise ShapeError(f"accuracy {a} outside [0, 1]")
        self.rows.append([float(a) for a in accuracies])

    def __getitem__(self, pos: tuple[int, int]) -> float:
        i, j = pos
        return self.rows[i][j]

    @property
    def increment_count(self) -> int:
        return len(self.rows)

    def average_accuracy(self) -> float:
        """Mean of the final row: the last model scored on every domain."""
        if not self.rows:
            raise EstimationError("matrix is empty")
        return float(np.mean(self.rows[-1]))

    def to_records(self) -> list[tuple[int, int, float]]:
        return [(i, j, a)
                for i, row in enumerate(self.rows)
                for j, a in enumerate(row)]

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["increment", "domain_id", "accuracy"])
            for i, j, a in self.to_records():
                writer.writerow([i, j, f"{a:.17g}"])

    @classmethod
    def read_csv(cls, path: str | Path) -> "AccuracyMatrix":
        matrix = cls()
        staged: dict[int, dict[int, float]] = {}
        with Path(path).open(newline="") as fh:
            for rec in csv.DictReader(fh):
                staged.setdefault(int(rec["increment"]), {})[
                    int(rec["domain_id"])] = float(rec["accuracy"])
        for i in sorted(staged):
            row = staged[i]
            matrix.append_row([row[j] for j in sorted(row)])
        return matrix


def forgetting(matrix: AccuracyMatrix) -> float:
    """Mean over past domains j < T of (A[j][j] - A[T][j]) x 100, T the
    final increment.  Negative values mean the stream improved old domains
    (backward transfer)."""
    t = matrix.increment_count - 1
    if t < 1:
        raise EstimationError("forgetting needs at least 2 increments")
    drops = [matrix[j, j] - matrix[t, j] for j in range(t)]
    return float(np.mean(drops) * 100.0)
