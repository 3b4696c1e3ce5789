# -*- coding: utf-8 -*-
"""
Dual memory: per-task episodic ring buffers used for replay, and per-task
generalization reservoirs that are only ever used by the look-ahead step.
"""
import json
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from bilevel_continual.exceptions import ParameterError, UsageError
from bilevel_continual.nn import forward_batch, softmax_temp

logger = logging.getLogger(__name__)


@dataclass
class Example:
    """One stored sample; ``stored_dist`` is the softened main-model prediction kept for distillation."""

    x: np.ndarray
    y: int
    task_id: int
    stored_dist: Optional[np.ndarray] = None
    uid: Optional[int] = None


class RingBuffer:
    """Fixed-capacity FIFO store; once full every insert overwrites the oldest slot."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ParameterError("ring buffer capacity must be >= 1, got {}".format(capacity))
        self.capacity = capacity
        self._slots: List[Example] = []
        self.write_cursor = 0

    def append(self, example):
        if len(self._slots) < self.capacity:
            self._slots.append(example)
        else:
            self._slots[self.write_cursor] = example
        self.write_cursor = (self.write_cursor + 1) % self.capacity

    @property
    def items(self):
        """Contents in insertion order, oldest first."""
        if len(self._slots) < self.capacity:
            return list(self._slots)
        return self._slots[self.write_cursor:] + self._slots[:self.write_cursor]

    def __getitem__(self, index):
        return self._slots[index]

    def __setitem__(self, index, example):
        self._slots[index] = example

    def __len__(self):
        return len(self._slots)

    def __iter__(self):
        return iter(self.items)


class Reservoir:
    """Uniform sample of every item ever offered (algorithm R)."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items: List[Example] = []
        self.seen = 0

    def offer(self, example, rng):
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(example)
            return
        slot = int(rng.integers(self.seen))
        if slot < self.capacity:
            self.items[slot] = example

    def __len__(self):
        return len(self.items)


class DualMemory:
    """
    Episodic memory (trained on through replay) and generalization memory (held out,
    consulted only by the outer step), with a shared per-task slot budget.

    With ``held_out=False`` nothing is ever harvested, so the episodic buffers get
    the whole budget and ``gm_fraction`` is ignored.
    """

    def __init__(self, per_task_budget, gm_fraction, held_out=True):
        if per_task_budget < 1:
            raise ParameterError("per_task_budget must be >= 1, got {}".format(per_task_budget))
        if not 0.0 < gm_fraction < 1.0:
            raise ParameterError("gm_fraction must lie in (0, 1), got {}".format(gm_fraction))
        self.per_task_budget = per_task_budget
        self.gm_fraction = gm_fraction
        self.held_out = held_out
        if held_out:
            self.episodic_capacity = max(1, int(round((1.0 - gm_fraction) * per_task_budget)))
        else:
            self.episodic_capacity = per_task_budget
        self.generalization_capacity = per_task_budget - self.episodic_capacity
        self.episodic: Dict[int, RingBuffer] = {}
        self.generalization: Dict[int, Reservoir] = {}

    def episodic_insert(self, example):
        buffer = self.episodic.get(example.task_id)
        if buffer is None:
            buffer = self.episodic[example.task_id] = RingBuffer(self.episodic_capacity)
        buffer.append(example)

    def gm_harvest(self, batch, rng):
        """Move one uniformly chosen example of ``batch`` into its task's reservoir; return the rest."""
        if not self.held_out:
            raise UsageError("this memory keeps no generalization store")
        batch = list(batch)
        index = int(rng.integers(len(batch)))
        harvested = batch.pop(index)
        reservoir = self.generalization.get(harvested.task_id)
        if reservoir is None:
            reservoir = self.generalization[harvested.task_id] = Reservoir(self.generalization_capacity)
        reservoir.offer(harvested, rng)
        return batch

    def is_generalization(self, example):
        """True while ``example`` sits in its task's reservoir; matched by uid, else by object."""
        reservoir = self.generalization.get(example.task_id)
        if reservoir is None:
            return False
        if example.uid is not None:
            return any(item.uid == example.uid for item in reservoir.items)
        return any(item is example for item in reservoir.items)

    def episodic_size(self):
        return sum(len(buffer) for buffer in self.episodic.values())

    def sample_replay(self, k, rng):
        """
        Uniform draws with replacement from the union of all episodic buffers, or
        every stored example (in random order) when fewer than ``k`` are stored.
        """
        buffers = [self.episodic[task_id] for task_id in sorted(self.episodic)]
        sizes = np.array([len(buffer) for buffer in buffers], dtype=np.int64)
        total = int(sizes.sum())
        if total == 0:
            return []
        if total < k:
            picks = rng.permutation(total)
        else:
            picks = rng.integers(total, size=k)
        offsets = np.cumsum(sizes)
        owners = np.searchsorted(offsets, picks, side="right")
        starts = offsets - sizes
        return [buffers[o][int(p - starts[o])] for o, p in zip(owners, picks)]

    def all_generalization(self):
        examples = []
        for task_id in sorted(self.generalization):
            examples.extend(self.generalization[task_id].items)
        return examples

    def episodic_examples(self, task_id):
        buffer = self.episodic.get(task_id)
        return buffer.items if buffer is not None else []

    def backfill_distributions(self, params, task_id, tau):
        """Attach softmax(f_theta(x) / tau) to every episodic example of ``task_id``."""
        buffer = self.episodic.get(task_id)
        if not buffer:
            return
        slots = [buffer[i] for i in range(len(buffer))]
        X = np.stack([np.asarray(example.x, dtype=np.float64) for example in slots])
        dists = softmax_temp(forward_batch(params, X, task_id), tau)
        for i, (example, dist) in enumerate(zip(slots, dists)):
            buffer[i] = replace(example, stored_dist=dist)
        logger.debug("Stored predictive distributions for %d examples of task %d", len(buffer), task_id)

    def snapshot(self):
        tasks = sorted(set(self.episodic) | set(self.generalization))
        return {
            "per_task_budget": self.per_task_budget,
            "gm_fraction": self.gm_fraction,
            "held_out": self.held_out,
            "episodic_capacity": self.episodic_capacity,
            "generalization_capacity": self.generalization_capacity,
            "tasks": [
                {
                    "task_id": task_id,
                    "episodic_size": len(self.episodic.get(task_id, ())),
                    "episodic_ids": [e.uid for e in self.episodic_examples(task_id)],
                    "generalization_size": len(self.generalization.get(task_id, ())),
                    "generalization_seen": getattr(self.generalization.get(task_id), "seen", 0),
                    "generalization_ids": [
                        e.uid for e in getattr(self.generalization.get(task_id), "items", [])
                    ],
                }
                for task_id in tasks
            ],
        }

    def dump_snapshot(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.snapshot(), fh, indent=2, sort_keys=True)
