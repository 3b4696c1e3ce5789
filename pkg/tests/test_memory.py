#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from bilevel_continual.exceptions import ParameterError, UsageError
from bilevel_continual.memory import DualMemory, Example, Reservoir, RingBuffer
from bilevel_continual.nn import forward, init_params, softmax_temp, zero_params
from bilevel_continual.test_utils import random_batch, tiny_model_config


def make_example(uid, task_id=0):
    return Example(x=np.full(3, float(uid)), y=uid % 3, task_id=task_id, uid=uid)


class TestRingBuffer(SimpleTestCase):
    def test_keeps_most_recent_in_order(self):
        buffer = RingBuffer(3)
        for uid in range(5):
            buffer.append(make_example(uid))
        self.assertEqual([e.uid for e in buffer.items], [2, 3, 4])
        self.assertEqual(len(buffer), 3)
        self.assertEqual(buffer.write_cursor, 2)

    def test_partial_fill(self):
        buffer = RingBuffer(4)
        buffer.append(make_example(0))
        self.assertEqual([e.uid for e in buffer], [0])

    def test_capacity_must_be_positive(self):
        with self.assertRaises(ParameterError):
            RingBuffer(0)


class TestReservoir(SimpleTestCase):
    def test_fills_before_replacing(self):
        reservoir = Reservoir(3)
        rng = np.random.default_rng(0)
        for uid in range(3):
            reservoir.offer(make_example(uid), rng)
        self.assertEqual([e.uid for e in reservoir.items], [0, 1, 2])
        self.assertEqual(reservoir.seen, 3)

    def test_inclusion_is_uniform(self):
        # 100 items offered to a 5-slot reservoir, 10,000 trials: each item kept 500 times in expectation
        counts = np.zeros(100)
        for trial in range(10000):
            rng = np.random.default_rng([7, trial])
            reservoir = Reservoir(5)
            for uid in range(100):
                reservoir.offer(make_example(uid), rng)
            for example in reservoir.items:
                counts[example.uid] += 1
        self.assertEqual(counts.sum(), 50000)
        _, p_value = stats.chisquare(counts, np.full(100, 500.0))
        self.assertGreater(p_value, 0.001)


class TestDualMemory(SimpleTestCase):
    def setUp(self):
        self.memory = DualMemory(per_task_budget=10, gm_fraction=0.2)
        self.rng = np.random.default_rng(0)

    def test_capacity_split(self):
        self.assertEqual((self.memory.episodic_capacity, self.memory.generalization_capacity), (8, 2))
        default_sized = DualMemory(256, 0.2)
        self.assertEqual((default_sized.episodic_capacity, default_sized.generalization_capacity), (205, 51))

    def test_without_held_out_store_episodic_gets_whole_budget(self):
        memory = DualMemory(256, 0.2, held_out=False)
        self.assertEqual((memory.episodic_capacity, memory.generalization_capacity), (256, 0))
        for uid in range(300):
            memory.episodic_insert(make_example(uid))
        self.assertEqual(len(memory.episodic_examples(0)), 256)
        with self.assertRaises(UsageError):
            memory.gm_harvest([make_example(1000), make_example(1001)], self.rng)

    def test_invalid_parameters(self):
        with self.assertRaises(ParameterError):
            DualMemory(0, 0.2)
        with self.assertRaises(ParameterError):
            DualMemory(10, 1.0)

    def test_episodic_capacity_per_task(self):
        for uid in range(30):
            self.memory.episodic_insert(make_example(uid, task_id=uid % 2))
        self.assertEqual(len(self.memory.episodic_examples(0)), 8)
        self.assertEqual(len(self.memory.episodic_examples(1)), 8)
        self.assertEqual(self.memory.episodic_size(), 16)
        self.assertEqual([e.uid for e in self.memory.episodic_examples(1)][-1], 29)

    def test_harvest_removes_exactly_one(self):
        batch = [make_example(uid) for uid in range(5)]
        rest = self.memory.gm_harvest(batch, self.rng)
        self.assertEqual(len(rest), 4)
        held = self.memory.all_generalization()
        self.assertEqual(len(held), 1)
        self.assertNotIn(held[0].uid, [e.uid for e in rest])
        self.assertTrue(self.memory.is_generalization(held[0]))
        self.assertFalse(any(self.memory.is_generalization(e) for e in rest))
        self.assertEqual(len(batch), 5)

    def test_evicted_examples_leave_the_held_out_set(self):
        offered = []
        for start in range(0, 60, 3):
            batch = [make_example(uid) for uid in range(start, start + 3)]
            rest = self.memory.gm_harvest(batch, self.rng)
            kept = {e.uid for e in rest}
            offered.extend(e for e in batch if e.uid not in kept)
        held = {e.uid for e in self.memory.all_generalization()}
        self.assertEqual(len(held), 2)
        for example in offered:
            self.assertEqual(self.memory.is_generalization(example), example.uid in held)

    def test_examples_without_uid_match_by_object(self):
        anonymous = [Example(x=np.zeros(3), y=0, task_id=0) for _ in range(2)]
        rest = self.memory.gm_harvest(anonymous, np.random.default_rng(1))
        held = self.memory.all_generalization()[0]
        self.assertTrue(self.memory.is_generalization(held))
        self.assertFalse(self.memory.is_generalization(rest[0]))
        self.assertFalse(self.memory.is_generalization(Example(x=np.zeros(3), y=0, task_id=1)))

    def test_harvested_examples_never_replayed(self):
        for start in range(0, 100, 5):
            batch = [make_example(uid) for uid in range(start, start + 5)]
            for example in self.memory.gm_harvest(batch, self.rng):
                self.memory.episodic_insert(example)
            replay = self.memory.sample_replay(16, self.rng)
            self.assertFalse(any(self.memory.is_generalization(e) for e in replay))
        self.assertLessEqual(len(self.memory.all_generalization()), 2)

    def test_sample_replay_empty(self):
        self.assertEqual(self.memory.sample_replay(5, self.rng), [])

    def test_sample_replay_returns_everything_when_short(self):
        for uid in range(3):
            self.memory.episodic_insert(make_example(uid))
        replay = self.memory.sample_replay(10, self.rng)
        self.assertEqual(sorted(e.uid for e in replay), [0, 1, 2])

    def test_sample_replay_spans_tasks(self):
        for uid in range(16):
            self.memory.episodic_insert(make_example(uid, task_id=uid % 2))
        replay = self.memory.sample_replay(200, self.rng)
        self.assertEqual(len(replay), 200)
        self.assertEqual({e.task_id for e in replay}, {0, 1})

    def test_sample_replay_is_deterministic(self):
        for uid in range(12):
            self.memory.episodic_insert(make_example(uid, task_id=uid % 3))
        first = self.memory.sample_replay(7, np.random.default_rng(4))
        second = self.memory.sample_replay(7, np.random.default_rng(4))
        self.assertEqual([e.uid for e in first], [e.uid for e in second])

    def test_backfill_distributions(self):
        config = tiny_model_config(input_dim=3)
        params = init_params(config, 0)
        for example in random_batch(config, 4):
            self.memory.episodic_insert(example)
        self.memory.backfill_distributions(params, 0, 5.0)
        for example in self.memory.episodic_examples(0):
            np.testing.assert_allclose(example.stored_dist, softmax_temp(forward(params, example.x), 5.0))
            self.assertAlmostEqual(example.stored_dist.sum(), 1.0)

    def test_backfill_missing_task_is_noop(self):
        params = init_params(tiny_model_config(input_dim=3), 0)
        self.memory.backfill_distributions(params, 4, 5.0)
        self.assertEqual(self.memory.episodic_size(), 0)

    def test_snapshot(self):
        for uid in range(4):
            self.memory.episodic_insert(make_example(uid))
        self.memory.gm_harvest([make_example(10), make_example(11)], self.rng)
        snapshot = self.memory.snapshot()
        self.assertEqual(snapshot["episodic_capacity"], 8)
        task = snapshot["tasks"][0]
        self.assertEqual(task["episodic_ids"], [0, 1, 2, 3])
        self.assertEqual(task["generalization_size"], 1)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "memory.json")
            self.memory.dump_snapshot(path)
            with open(path) as fh:
                self.assertEqual(json.load(fh), snapshot)


class TestMemoryAtScale(SimpleTestCase):
    def test_long_insert_log_keeps_last_items_in_order(self):
        memory = DualMemory(256, 0.2)
        for uid in range(10000):
            memory.episodic_insert(make_example(uid))
        self.assertEqual([e.uid for e in memory.episodic_examples(0)], list(range(10000 - 205, 10000)))

    def test_reservoir_capacity_bound(self):
        memory = DualMemory(256, 0.2)
        rng = np.random.default_rng(1)
        for start in range(0, 12000, 2):
            memory.gm_harvest([make_example(start), make_example(start + 1)], rng)
        self.assertEqual(len(memory.all_generalization()), 51)
        self.assertEqual(memory.generalization[0].seen, 6000)

    def test_replay_balances_equal_tasks(self):
        memory = DualMemory(125, 0.2)
        for uid in range(200):
            memory.episodic_insert(make_example(uid, task_id=uid % 2))
        rng = np.random.default_rng(3)
        fractions = [np.mean([e.task_id for e in memory.sample_replay(128, rng)]) for _ in range(1000)]
        self.assertAlmostEqual(float(np.mean(fractions)), 0.5, delta=0.02)

    def test_all_generalization_across_tasks(self):
        memory = DualMemory(256, 0.2)
        rng = np.random.default_rng(0)
        for uid in range(0, 3 * 200, 2):
            task_id = uid // 200
            memory.gm_harvest([make_example(uid, task_id), make_example(uid + 1, task_id)], rng)
        self.assertEqual(len(memory.all_generalization()), 153)

    def test_backfill_zero_network_is_uniform_and_isolated(self):
        config = tiny_model_config(input_dim=3)
        memory = DualMemory(10, 0.2)
        for example in random_batch(config, 3, task_ids=[0, 1]):
            memory.episodic_insert(example)
        memory.backfill_distributions(zero_params(config), 0, 5.0)
        for example in memory.episodic_examples(0):
            np.testing.assert_allclose(example.stored_dist, np.full(3, 1.0 / 3))
        for example in memory.episodic_examples(1):
            self.assertIsNone(example.stored_dist)
