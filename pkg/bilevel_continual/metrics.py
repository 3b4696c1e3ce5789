# -*- coding: utf-8 -*-
"""
Average accuracy, forgetting and learning accuracy over an accuracy matrix.

Indices are 0-based: ``a[i][j]`` is the accuracy on task ``j``'s test set after
training finished on task ``i``; only the lower triangle (j <= i) is defined.
"""
import csv
import io

import numpy as np

from bilevel_continual.exceptions import IncompleteMatrixError, ParameterError, UndefinedMetricError


class AccuracyMatrix:

    def __init__(self, num_tasks):
        if num_tasks < 1:
            raise ParameterError("an accuracy matrix needs at least one task")
        self.num_tasks = num_tasks
        self.values = np.full((num_tasks, num_tasks), np.nan)

    def __setitem__(self, index, value):
        i, j = index
        if j > i:
            raise IndexError("a[{}][{}] lies above the diagonal".format(i, j))
        if not 0.0 <= value <= 1.0:
            raise ParameterError("accuracy {} outside [0, 1]".format(value))
        self.values[i, j] = value

    def __getitem__(self, index):
        i, j = index
        if j > i:
            raise IndexError("a[{}][{}] lies above the diagonal".format(i, j))
        return self.values[i, j]

    def set_row(self, i, accuracies):
        for j, value in enumerate(accuracies):
            self[i, j] = value

    def is_defined(self, i, j):
        return j <= i and not np.isnan(self.values[i, j])

    def row(self, i):
        return self.values[i, :i + 1]

    def __eq__(self, other):
        if not isinstance(other, AccuracyMatrix):
            return NotImplemented
        return self.num_tasks == other.num_tasks and np.array_equal(self.values, other.values, equal_nan=True)

    def to_csv(self):
        """Header row, then one row per ``i``; entries above the diagonal or never filled are empty."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["after_task"] + ["task_{}".format(j) for j in range(self.num_tasks)])
        for i in range(self.num_tasks):
            writer.writerow([i] + [
                repr(float(self.values[i, j])) if self.is_defined(i, j) else ""
                for j in range(self.num_tasks)
            ])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise IncompleteMatrixError("empty accuracy matrix file")
        matrix = cls(len(rows) - 1)
        for i, row in enumerate(rows[1:]):
            for j, cell in enumerate(row[1:]):
                if cell.strip():
                    matrix[i, j] = float(cell)
        return matrix


def _require(m, cells):
    missing = [(i, j) for i, j in cells if not m.is_defined(i, j)]
    if missing:
        raise IncompleteMatrixError("accuracy matrix is missing entries {}".format(missing))


def acc(m):
    last = m.num_tasks - 1
    _require(m, [(last, j) for j in range(m.num_tasks)])
    return float(np.mean(m.values[last]))


def fm(m):
    """Mean over earlier tasks of (best accuracy before the final task) - (final accuracy); signed."""
    T = m.num_tasks
    if T < 2:
        raise UndefinedMetricError("forgetting needs at least two tasks")
    drops = []
    for j in range(T - 1):
        _require(m, [(l, j) for l in range(j, T)])
        drops.append(np.max(m.values[j:T - 1, j]) - m.values[T - 1, j])
    return float(np.mean(drops))


def la(m):
    _require(m, [(i, i) for i in range(m.num_tasks)])
    return float(np.mean(np.diag(m.values)))


def summarize(m):
    """ACC/FM/LA, with ``None`` for any metric the matrix does not define."""
    summary = {}
    for name, metric in (("ACC", acc), ("FM", fm), ("LA", la)):
        try:
            summary[name] = metric(m)
        except (IncompleteMatrixError, UndefinedMetricError):
            summary[name] = None
    return summary
