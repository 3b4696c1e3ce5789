# -*- coding: utf-8 -*-
"""
Task streams for online continual learning.

Permuted tasks share one copy of the base images: each ``Task`` keeps its pixel
permutation and arrival order and applies them batch by batch, so a 23-task
stream costs little more memory than MNIST itself.
"""
import gzip
import logging
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from bilevel_continual.exceptions import (
    ConsistencyError,
    IdxFormatError,
    ParameterError,
    TruncatedFileError,
)

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
MNIST_CLASSES = 10


def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _read_idx(path, magic):
    data = _read_bytes(path)
    if len(data) < 8:
        raise TruncatedFileError("{}: file too short for an IDX header".format(path))
    found, count = struct.unpack(">II", data[:8])
    if found != magic:
        raise IdxFormatError("{}: magic number {} where {} was expected".format(path, found, magic))
    shape = (count,)
    offset = 8
    if magic == IDX_IMAGES_MAGIC:
        if len(data) < 16:
            raise TruncatedFileError("{}: file too short for an image header".format(path))
        rows, cols = struct.unpack(">II", data[8:16])
        shape = (count, rows * cols)
        offset = 16
    needed = int(np.prod(shape))
    if len(data) - offset < needed:
        raise TruncatedFileError("{}: expected {} payload bytes, found {}".format(path, needed, len(data) - offset))
    return np.frombuffer(data, dtype=np.uint8, count=needed, offset=offset).reshape(shape)


def load_mnist_idx(images_path, labels_path):
    """
    Parse a big-endian IDX image/label pair (optionally gzipped).

    :return: (X, y) with X of shape (n, rows * cols) scaled to [0, 1] and integer labels
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError("{} images but {} labels".format(images.shape[0], labels.shape[0]))
    logger.info("Loaded %d examples from %s", images.shape[0], images_path)
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


def inverse_permutation(permutation):
    return np.argsort(permutation)


@dataclass(frozen=True)
class Task:
    task_id: int
    num_classes: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    permutation: Optional[np.ndarray] = None
    train_order: Optional[np.ndarray] = None

    @property
    def input_dim(self):
        return self.train_x.shape[1]

    @property
    def n_train(self):
        return len(self.train_order) if self.train_order is not None else len(self.train_y)

    def _features(self, X):
        return X if self.permutation is None else X[:, self.permutation]

    def train_rows(self, positions):
        rows = positions if self.train_order is None else self.train_order[positions]
        return self._features(self.train_x[rows]), self.train_y[rows]

    def train_batches(self, batch_size):
        """Arrival-ordered mini-batches; every training sample appears exactly once."""
        for start in range(0, self.n_train, batch_size):
            yield self.train_rows(np.arange(start, min(start + batch_size, self.n_train)))

    def iter_train(self):
        for X, y in self.train_batches(256):
            for x, label in zip(X, y):
                yield x, int(label)

    def test_set(self):
        return self._features(self.test_x), self.test_y


@dataclass(frozen=True)
class TaskStream:
    tasks: Tuple[Task, ...]
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [task.task_id for task in self.tasks]
        if ids != list(range(len(ids))):
            raise ConsistencyError("task ids must be 0..T-1 in order, got {}".format(ids))
        if len({task.input_dim for task in self.tasks}) > 1:
            raise ConsistencyError("all tasks must share one feature dimension")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, index):
        return self.tasks[index]

    @property
    def input_dim(self):
        return self.tasks[0].input_dim

    @property
    def num_classes(self):
        return max(task.num_classes for task in self.tasks)


def make_permuted_stream(base, test, num_tasks, seed, permutations: Optional[Sequence[np.ndarray]] = None,
                         train_limit=None, test_limit=None):
    """
    Build ``num_tasks`` Permuted-MNIST tasks from base (X, y) train and test arrays.

    Task ``t`` draws its pixel permutation and its arrival order from generators
    seeded with ``[seed, t]``; ``permutations`` replaces the drawn permutations.
    """
    if num_tasks < 1:
        raise ParameterError("num_tasks must be >= 1, got {}".format(num_tasks))
    train_x, train_y = base
    test_x, test_y = test
    if train_x.shape[1] != test_x.shape[1]:
        raise ConsistencyError("train and test sets have different feature dimensions")
    if permutations is not None and len(permutations) != num_tasks:
        raise ParameterError("expected {} permutations, got {}".format(num_tasks, len(permutations)))
    if test_limit is not None:
        test_x, test_y = test_x[:test_limit], test_y[:test_limit]
    dim = train_x.shape[1]
    tasks = []
    for t in range(num_tasks):
        perm_rng = np.random.default_rng([seed, t, 0])
        order_rng = np.random.default_rng([seed, t, 1])
        perm = perm_rng.permutation(dim) if permutations is None else np.asarray(permutations[t])
        if not np.array_equal(np.sort(perm), np.arange(dim)):
            raise ParameterError("permutation for task {} is not a bijection on 0..{}".format(t, dim - 1))
        order = order_rng.permutation(len(train_y))[:train_limit]
        tasks.append(Task(t, MNIST_CLASSES, train_x, train_y, test_x, test_y, permutation=perm, train_order=order))
    descriptor = {
        "source": "permuted_mnist",
        "seed": seed,
        "num_tasks": num_tasks,
        "train_limit": train_limit,
        "test_limit": test_limit,
        "explicit_permutations": permutations is not None,
    }
    return TaskStream(tuple(tasks), descriptor)


def make_synthetic_stream(num_tasks, classes_per_task, samples, dim, separation, seed, identical_tasks=False):
    """
    Gaussian-blob tasks: class means lie on a random line through a random centre,
    ``separation`` apart, with unit isotropic noise; 80/20 train/test split.
    """
    if min(num_tasks, classes_per_task, samples, dim) < 1:
        raise ParameterError("all synthetic stream counts must be >= 1")
    if samples < 2:
        raise ParameterError("samples must be >= 2 so every task keeps a test example, got {}".format(samples))
    if not separation > 0:
        raise ParameterError("separation must be > 0, got {}".format(separation))
    n_train = min(max(int(round(0.8 * samples)), 1), samples - 1)
    offsets = (np.arange(classes_per_task) - (classes_per_task - 1) / 2.0) * separation
    tasks = []
    for t in range(num_tasks):
        rng = np.random.default_rng([seed, 0 if identical_tasks else t])
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        means = rng.normal(size=dim) + offsets[:, None] * direction
        labels = rng.permutation(np.arange(samples) % classes_per_task)
        X = means[labels] + rng.normal(size=(samples, dim))
        tasks.append(Task(
            t, classes_per_task,
            X[:n_train], labels[:n_train],
            X[n_train:], labels[n_train:],
        ))
    descriptor = {
        "source": "synthetic",
        "seed": seed,
        "num_tasks": num_tasks,
        "classes_per_task": classes_per_task,
        "samples": samples,
        "dim": dim,
        "separation": separation,
        "identical_tasks": identical_tasks,
    }
    return TaskStream(tuple(tasks), descriptor)
