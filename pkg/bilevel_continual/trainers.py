# -*- coding: utf-8 -*-
"""
Online continual-learning trainers.

Every trainer walks the task stream once, batch by batch, and fills one row of the
accuracy matrix after finishing each task. BCL trainers keep a main model
``theta`` that is only ever moved by interpolating towards fast weights trained
on the current batch plus replayed memory.
"""
import logging
import time
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np
from django.core.exceptions import ValidationError

from bilevel_continual.exceptions import MemoryInvariantError, UsageError
from bilevel_continual.memory import DualMemory, Example
from bilevel_continual.metrics import AccuracyMatrix
from bilevel_continual.nn import (
    LossConfig,
    MLPConfig,
    clone_params,
    forward_batch,
    grad_composite_loss,
    init_params,
    interpolate,
    sgd_step,
)

logger = logging.getLogger(__name__)

BCL_DUAL = "bcl_dual"
BCL_SINGLE = "bcl_single"
ER = "er"
FINETUNE = "finetune"
OFFLINE = "offline"
METHODS = (BCL_DUAL, BCL_SINGLE, ER, FINETUNE, OFFLINE)


def _is_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_real(value):
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


@dataclass(frozen=True)
class TrainerConfig:
    method: str = BCL_DUAL
    inner_lr: float = 0.03
    outer_lr: float = 0.3
    n_inner: int = 2
    n_outer: int = 1
    batch_size: int = 10
    replay_batch: int = 128
    per_task_budget: int = 256
    gm_fraction: float = 0.2
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    offline_epochs: int = 3
    single_steps: int = 1
    adapt_steps: int = 0
    adapt_lr: Optional[float] = None

    @classmethod
    def field_names(cls):
        """Flat keys accepted by ``from_dict``; the loss config is spelled out as temperature/reg_weight."""
        names = [f.name for f in fields(cls) if f.name != "loss_cfg"]
        return names + ["temperature", "reg_weight"]

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ValidationError({key: ["unknown trainer setting"] for key in unknown})
        temperature = values.pop("temperature", 5.0)
        reg_weight = values.pop("reg_weight", 100.0)
        errors = {}
        if not (_is_real(temperature) and temperature > 0):
            errors["temperature"] = ["must be a number > 0"]
        if not (_is_real(reg_weight) and reg_weight >= 0):
            errors["reg_weight"] = ["must be a number >= 0"]
        if errors:
            raise ValidationError(errors)
        config = cls(loss_cfg=LossConfig(float(temperature), float(reg_weight)), **values)
        config.validate()
        return config

    def as_dict(self):
        values = {name: getattr(self, name) for name in self.field_names() if hasattr(self, name)}
        values["temperature"] = self.loss_cfg.temperature
        values["reg_weight"] = self.loss_cfg.reg_weight
        return values

    @property
    def effective_adapt_lr(self):
        return self.inner_lr if self.adapt_lr is None else self.adapt_lr

    def errors(self, allow_frozen_model=False):
        """
        Violated invariants keyed by field name.

        ``allow_frozen_model`` admits outer_lr = 0, which freezes the main model; the
        experiment runner never sets it.
        """
        errors = {}

        def check(name, ok, message):
            if not ok:
                errors.setdefault(name, []).append(message)

        check("method", self.method in METHODS, "must be one of {}".format(", ".join(METHODS)))
        check("inner_lr", _is_real(self.inner_lr) and self.inner_lr > 0, "must be a number > 0")
        check("outer_lr", _is_real(self.outer_lr) and self.outer_lr <= 1 and (
            self.outer_lr > 0 or (allow_frozen_model and self.outer_lr == 0)), "must lie in (0, 1]")
        check("gm_fraction", _is_real(self.gm_fraction) and 0 < self.gm_fraction < 1, "must lie in (0, 1)")
        for name in ("n_inner", "n_outer", "replay_batch", "per_task_budget", "offline_epochs", "single_steps"):
            value = getattr(self, name)
            check(name, _is_int(value) and value >= 1, "must be an integer >= 1")
        check("adapt_steps", _is_int(self.adapt_steps) and self.adapt_steps >= 0, "must be an integer >= 0")
        check("seed", _is_int(self.seed), "must be an integer")
        check("batch_size", _is_int(self.batch_size) and self.batch_size >= 1, "must be an integer >= 1")
        if self.method == BCL_DUAL and _is_int(self.batch_size):
            check("batch_size", self.batch_size >= 2,
                  "must be >= 2 for bcl_dual: one example per batch is held out for the generalization memory")
        if self.adapt_lr is not None:
            check("adapt_lr", _is_real(self.adapt_lr) and self.adapt_lr > 0, "must be a number > 0")
        return errors

    def validate(self, allow_frozen_model=False):
        errors = self.errors(allow_frozen_model)
        if errors:
            raise ValidationError(errors)
        return self


@dataclass
class StepRecord:
    task_id: int
    batch_index: int
    inner_loss: float
    outer_loss: Optional[float] = None
    lookahead_skipped: bool = False


@dataclass
class RunResult:
    final_params: object
    acc_matrix: AccuracyMatrix
    step_log: List[StepRecord]
    wall_time: List[float]
    adapt_matrix: Optional[AccuracyMatrix] = None
    memory: Optional[DualMemory] = None

    def step_summary(self):
        summary = []
        for task_id in sorted({record.task_id for record in self.step_log}):
            records = [r for r in self.step_log if r.task_id == task_id]
            outer = [r.outer_loss for r in records if r.outer_loss is not None]
            summary.append({
                "task_id": task_id,
                "steps": len(records),
                "mean_inner_loss": float(np.mean([r.inner_loss for r in records])),
                "mean_outer_loss": float(np.mean(outer)) if outer else None,
                "lookahead_skipped": sum(r.lookahead_skipped for r in records),
            })
        return summary


def _plain(loss_cfg):
    return LossConfig(loss_cfg.temperature, 0.0)


def _descend(params, examples, loss_cfg, lr, steps, losses=None):
    phi = clone_params(params)
    for _ in range(steps):
        loss, grads = grad_composite_loss(phi, examples, loss_cfg)
        if losses is not None:
            losses.append(loss)
        phi = sgd_step(phi, grads, lr)
    return phi


def inner_loop(theta, batch, mem, cfg, rng, losses=None, steps=None, audit=False):
    """
    Fast weights phi* from ``theta``: ``n_inner`` SGD steps at ``inner_lr`` on the
    regularized loss over the batch plus one replay draw reused by every step.
    ``theta`` itself is never written.
    """
    if not batch:
        raise UsageError("inner loop needs a non-empty batch")
    replay = mem.sample_replay(cfg.replay_batch, rng) if mem is not None else []
    examples = list(batch) + replay
    if audit and mem is not None and any(mem.is_generalization(example) for example in examples):
        raise MemoryInvariantError("a generalization-memory example reached the inner loop")
    return _descend(theta, examples, cfg.loss_cfg, cfg.inner_lr, steps or cfg.n_inner, losses)


def lookahead(phi_star, mem, cfg):
    """One plain cross-entropy step on all of the generalization memory; (phi', loss or None)."""
    held_out = mem.all_generalization()
    if not held_out:
        return phi_star, None
    loss, grads = grad_composite_loss(phi_star, held_out, _plain(cfg.loss_cfg))
    return sgd_step(phi_star, grads, cfg.inner_lr), loss


def outer_update_dual(theta, phi_star, mem, cfg):
    phi_prime, _ = lookahead(phi_star, mem, cfg)
    return interpolate(theta, phi_prime, cfg.outer_lr)


def evaluate(params, task):
    """Test accuracy scored with the task's own head; ties go to the lowest class index."""
    X, y = task.test_set()
    if len(y) == 0:
        raise UsageError("task {} has an empty test set".format(task.task_id))
    predictions = np.argmax(forward_batch(params, X, task.task_id), axis=1)
    return float(np.mean(predictions == y))


def adapt_then_evaluate(params, mem, task, steps, lr):
    """Finetune a clone on the task's episodic buffer before scoring it; ``params`` is untouched."""
    examples = mem.episodic_examples(task.task_id) if mem is not None else []
    if not examples:
        logger.warning("No episodic memory for task %d, evaluating without adaptation", task.task_id)
        return evaluate(params, task)
    adapted = _descend(params, examples, LossConfig(reg_weight=0.0), lr, steps)
    return evaluate(adapted, task)


class ContinualTrainer:
    """
    Shared single-pass loop: feed every batch of every task to ``observe`` once,
    call ``end_task``, then score all tasks seen so far.
    """

    method = None
    uses_memory = True
    holds_out = False
    distills = False

    def __init__(self, stream, cfg, model_config=None, audit=False):
        if cfg.method != self.method:
            raise ValidationError({"method": ["{} cannot run method {!r}".format(type(self).__name__, cfg.method)]})
        self.cfg = cfg.validate(allow_frozen_model=True)
        self.stream = stream
        self.model_config = model_config or MLPConfig(
            input_dim=stream.input_dim, num_classes=stream.num_classes, num_tasks=len(stream),
        )
        self.theta = init_params(self.model_config, [cfg.seed, 0])
        self.rng = np.random.default_rng([cfg.seed, 1])
        self.memory = (
            DualMemory(cfg.per_task_budget, cfg.gm_fraction, held_out=self.holds_out) if self.uses_memory else None
        )
        self.plain_loss = _plain(cfg.loss_cfg)
        self.audit = audit
        self.step_log: List[StepRecord] = []
        self._next_uid = 0

    def make_examples(self, task, X, y):
        examples = []
        for x, label in zip(X, y):
            examples.append(Example(x=x, y=int(label), task_id=task.task_id, uid=self._next_uid))
            self._next_uid += 1
        return examples

    def observe(self, task, batch_index, batch):
        raise NotImplementedError

    def end_task(self, task):
        if self.distills:
            self.memory.backfill_distributions(self.theta, task.task_id, self.cfg.loss_cfg.temperature)

    def remember(self, batch):
        for example in batch:
            self.memory.episodic_insert(example)

    def score_row(self, matrix, adapt_matrix, i):
        row = [evaluate(self.theta, self.stream[j]) for j in range(i + 1)]
        matrix.set_row(i, row)
        logger.info("%s after task %d: mean accuracy %.4f over %d tasks", self.method, i, np.mean(row), len(row))
        if adapt_matrix is not None:
            adapt_matrix.set_row(i, [
                adapt_then_evaluate(self.theta, self.memory, self.stream[j],
                                    self.cfg.adapt_steps, self.cfg.effective_adapt_lr)
                for j in range(i + 1)
            ])

    def run(self):
        num_tasks = len(self.stream)
        matrix = AccuracyMatrix(num_tasks)
        adapt_matrix = AccuracyMatrix(num_tasks) if self.cfg.adapt_steps and self.uses_memory else None
        wall_time = []
        for task in self.stream:
            logger.info("Training %s on task %d (%d samples)", self.method, task.task_id, task.n_train)
            started = time.perf_counter()
            for batch_index, (X, y) in enumerate(task.train_batches(self.cfg.batch_size)):
                self.observe(task, batch_index, self.make_examples(task, X, y))
            self.end_task(task)
            wall_time.append(time.perf_counter() - started)
            self.score_row(matrix, adapt_matrix, task.task_id)
        return RunResult(self.theta, matrix, self.step_log, wall_time, adapt_matrix, self.memory)


class FinetuneTrainer(ContinualTrainer):
    method = FINETUNE
    uses_memory = False

    def observe(self, task, batch_index, batch):
        loss, grads = grad_composite_loss(self.theta, batch, self.plain_loss)
        self.theta = sgd_step(self.theta, grads, self.cfg.inner_lr)
        self.step_log.append(StepRecord(task.task_id, batch_index, loss))


class ERTrainer(ContinualTrainer):
    method = ER

    def observe(self, task, batch_index, batch):
        replay = self.memory.sample_replay(self.cfg.replay_batch, self.rng)
        loss, grads = grad_composite_loss(self.theta, batch + replay, self.plain_loss)
        self.theta = sgd_step(self.theta, grads, self.cfg.inner_lr)
        self.remember(batch)
        self.step_log.append(StepRecord(task.task_id, batch_index, loss))


class BCLSingleTrainer(ContinualTrainer):
    """Fast weights from ``single_steps`` regularized SGD steps, then interpolation; no held-out memory."""

    method = BCL_SINGLE
    distills = True

    def observe(self, task, batch_index, batch):
        losses = []
        phi = inner_loop(self.theta, batch, self.memory, self.cfg, self.rng,
                         losses=losses, steps=self.cfg.single_steps)
        self.theta = interpolate(self.theta, phi, self.cfg.outer_lr)
        self.remember(batch)
        self.step_log.append(StepRecord(task.task_id, batch_index, losses[0]))


class BCLDualTrainer(ContinualTrainer):
    """
    Harvest one example per batch into the generalization memory, then run
    ``n_outer`` rounds of: fresh fast weights, inner loop, look-ahead step on the
    generalization memory, interpolation into ``theta``.
    """

    method = BCL_DUAL
    holds_out = True
    distills = True

    def observe(self, task, batch_index, batch):
        if len(batch) > 1:
            batch = self.memory.gm_harvest(batch, self.rng)
        for _ in range(self.cfg.n_outer):
            losses = []
            phi_star = inner_loop(self.theta, batch, self.memory, self.cfg, self.rng,
                                  losses=losses, audit=self.audit)
            phi_prime, outer_loss = lookahead(phi_star, self.memory, self.cfg)
            if outer_loss is None:
                logger.debug("Generalization memory empty at task %d batch %d, skipping look-ahead",
                             task.task_id, batch_index)
            self.theta = interpolate(self.theta, phi_prime, self.cfg.outer_lr)
            self.step_log.append(StepRecord(task.task_id, batch_index, losses[0], outer_loss, outer_loss is None))
        self.remember(batch)


class OfflineTrainer(ContinualTrainer):
    """Shuffled multi-epoch SGD over the pooled data of all tasks; only the final row is scored."""

    method = OFFLINE
    uses_memory = False

    def run(self):
        tasks = list(self.stream)
        owners = np.concatenate([np.full(task.n_train, task.task_id) for task in tasks])
        positions = np.concatenate([np.arange(task.n_train) for task in tasks])
        started = time.perf_counter()
        for epoch in range(self.cfg.offline_epochs):
            order = self.rng.permutation(len(owners))
            for batch_index, start in enumerate(range(0, len(order), self.cfg.batch_size)):
                picked = order[start:start + self.cfg.batch_size]
                batch = []
                for task_id in np.unique(owners[picked]):
                    task = tasks[task_id]
                    X, y = task.train_rows(positions[picked][owners[picked] == task_id])
                    batch.extend(self.make_examples(task, X, y))
                loss, grads = grad_composite_loss(self.theta, batch, self.plain_loss)
                self.theta = sgd_step(self.theta, grads, self.cfg.inner_lr)
                # pooled batches mix tasks, so the record is keyed by epoch
                self.step_log.append(StepRecord(epoch, batch_index, loss))
            logger.info("offline epoch %d finished", epoch)
        matrix = AccuracyMatrix(len(tasks))
        self.score_row(matrix, None, len(tasks) - 1)
        return RunResult(self.theta, matrix, self.step_log, [time.perf_counter() - started])


def train_bcl_dual(stream, cfg, model_config=None, audit=False):
    return BCLDualTrainer(stream, cfg, model_config, audit).run()


def train_bcl_single(stream, cfg, model_config=None):
    return BCLSingleTrainer(stream, cfg, model_config).run()


def train_er(stream, cfg, model_config=None):
    return ERTrainer(stream, cfg, model_config).run()


def train_finetune(stream, cfg, model_config=None):
    return FinetuneTrainer(stream, cfg, model_config).run()


def train_offline(stream, cfg, model_config=None):
    return OfflineTrainer(stream, cfg, model_config).run()
