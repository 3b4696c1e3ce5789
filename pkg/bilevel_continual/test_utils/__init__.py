# -*- coding: utf-8 -*-
"""Fixture builders shared by the test suite."""
import gzip
import os
import struct

import numpy as np

from bilevel_continual.memory import Example
from bilevel_continual.nn import SINGLE_HEAD, MLPConfig, init_params
from bilevel_continual.tasks import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC
from bilevel_continual.trainers import TrainerConfig


def idx_images_bytes(images):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes()


def idx_labels_bytes(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes()


def write_bytes(path, payload, compress=False):
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)
    return path


def write_mnist_fixture(directory, n_train=60, n_test=20, side=4, seed=0, compress=False):
    """Random IDX files named like the MNIST distribution; returns the train/test arrays written."""
    rng = np.random.default_rng(seed)
    suffix = ".gz" if compress else ""
    arrays = {}
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        images = rng.integers(0, 256, size=(n, side, side), dtype=np.uint8)
        labels = rng.integers(0, 10, size=n, dtype=np.uint8)
        write_bytes(os.path.join(directory, "{}-images-idx3-ubyte{}".format(prefix, suffix)),
                    idx_images_bytes(images), compress)
        write_bytes(os.path.join(directory, "{}-labels-idx1-ubyte{}".format(prefix, suffix)),
                    idx_labels_bytes(labels), compress)
        arrays[prefix] = (images, labels)
    return arrays


def tiny_model_config(input_dim=5, hidden_dims=(6, 4), num_classes=3, head_mode=SINGLE_HEAD, num_tasks=1):
    return MLPConfig(input_dim=input_dim, hidden_dims=hidden_dims, num_classes=num_classes,
                     head_mode=head_mode, num_tasks=num_tasks)


def random_params(config, seed=0, scale=1.0):
    params = init_params(config, seed)
    if scale != 1.0:
        params.layers = [(w * scale, b + scale * 0.1) for w, b in params.layers]
    return params


def random_batch(config, n, seed=0, with_dists=False, task_ids=None, uid_start=0):
    rng = np.random.default_rng(seed)
    batch = []
    for i in range(n):
        task_id = 0 if task_ids is None else task_ids[i % len(task_ids)]
        dist = rng.dirichlet(np.ones(config.num_classes)) if with_dists else None
        batch.append(Example(
            x=rng.normal(size=config.input_dim),
            y=int(rng.integers(config.num_classes)),
            task_id=task_id,
            stored_dist=dist,
            uid=uid_start + i,
        ))
    return batch


def quick_trainer_config(method, **overrides):
    values = dict(
        method=method, inner_lr=0.05, outer_lr=0.5, n_inner=2, n_outer=1, batch_size=5,
        replay_batch=8, per_task_budget=10, gm_fraction=0.2, seed=0, offline_epochs=1,
    )
    values.update(overrides)
    return TrainerConfig.from_dict(values)


def synthetic_config(output_dir, **overrides):
    """A small synthetic-benchmark experiment document."""
    raw = {
        "benchmark": "synthetic",
        "num_tasks": 2,
        "methods": ["bcl_dual", "er"],
        "seeds": [0, 1],
        "output_dir": output_dir,
        "synthetic": {"classes_per_task": 2, "samples": 40, "dim": 4, "separation": 4.0},
        "model": {"hidden_dims": [8]},
        "trainer": {"batch_size": 4, "replay_batch": 6, "per_task_budget": 10},
    }
    raw.update(overrides)
    return raw
