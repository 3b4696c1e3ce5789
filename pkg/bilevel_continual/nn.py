# -*- coding: utf-8 -*-
"""
Dense multilayer perceptron primitives with hand-written reverse-mode gradients.

Parameters are float64 numpy arrays handled with value semantics: every update
returns a new ``ModelParams`` and leaves its inputs untouched, so the main model
and its fast-weight clones can be passed around freely.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from bilevel_continual.exceptions import (
    LabelError,
    NonFiniteError,
    ParameterError,
    ShapeError,
    TaskIdError,
    UsageError,
)

SINGLE_HEAD = "single_head"
PER_TASK_HEAD = "per_task_head"
HEAD_MODES = (SINGLE_HEAD, PER_TASK_HEAD)

Layer = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    hidden_dims: Tuple[int, ...] = (128, 128, 128)
    num_classes: int = 10
    head_mode: str = SINGLE_HEAD
    num_tasks: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, self.num_classes, self.num_tasks) + self.hidden_dims
        if any(int(d) < 1 for d in dims):
            raise ParameterError("MLP dimensions must all be >= 1, got {}".format(dims))
        if self.head_mode not in HEAD_MODES:
            raise ParameterError("head_mode must be one of {}, got {!r}".format(HEAD_MODES, self.head_mode))

    @property
    def num_heads(self):
        return self.num_tasks if self.head_mode == PER_TASK_HEAD else 1

    def layer_shapes(self):
        """(out, in) weight shapes: hidden layers first, then one output layer per head."""
        widths = (self.input_dim,) + self.hidden_dims
        shapes = [(out, inp) for inp, out in zip(widths[:-1], widths[1:])]
        shapes += [(self.num_classes, widths[-1])] * self.num_heads
        return shapes


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 5.0
    reg_weight: float = 100.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ParameterError("temperature must be > 0, got {}".format(self.temperature))
        if not self.reg_weight >= 0:
            raise ParameterError("reg_weight must be >= 0, got {}".format(self.reg_weight))


def _signature(layers):
    return [(w.shape, b.shape) for w, b in layers]


def _check_finite(layers):
    for w, b in layers:
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NonFiniteError("parameter update produced NaN or Inf entries")


@dataclass
class ModelParams:
    """Weights and biases of an MLP; holds the main model as well as fast weights."""

    config: MLPConfig
    layers: List[Layer]

    def __post_init__(self):
        expected = [(shape, (shape[0],)) for shape in self.config.layer_shapes()]
        if _signature(self.layers) != expected:
            raise ShapeError("layer shapes {} do not match config {}".format(_signature(self.layers), expected))

    @property
    def depth(self):
        return len(self.config.hidden_dims)

    @property
    def heads(self):
        return self.layers[self.depth:]

    def head_index(self, task_id):
        if self.config.head_mode == SINGLE_HEAD:
            return 0
        if not 0 <= int(task_id) < self.config.num_tasks:
            raise TaskIdError("task_id {} outside [0, {})".format(task_id, self.config.num_tasks))
        return int(task_id)

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in self.layers])


@dataclass
class Gradients:
    layers: List[Layer]

    @classmethod
    def zeros_like(cls, params):
        return cls([(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers])

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in self.layers])


def init_params(config, seed):
    """Fan-based uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for out, inp in config.layer_shapes():
        limit = np.sqrt(6.0 / (inp + out))
        layers.append((rng.uniform(-limit, limit, size=(out, inp)), np.zeros(out)))
    return ModelParams(config, layers)


def zero_params(config):
    return ModelParams(config, [(np.zeros((out, inp)), np.zeros(out)) for out, inp in config.layer_shapes()])


def clone_params(params):
    return ModelParams(params.config, [(w.copy(), b.copy()) for w, b in params.layers])


def _resolve_heads(params, task_ids, n):
    if params.config.num_heads == 1:
        return np.zeros(n, dtype=np.int64)
    heads = np.broadcast_to(np.asarray(task_ids, dtype=np.int64), (n,))
    if heads.size and (heads.min() < 0 or heads.max() >= params.config.num_tasks):
        raise TaskIdError("task ids must lie in [0, {})".format(params.config.num_tasks))
    return heads


def _trunk_forward(params, X):
    activations = [X]
    for w, b in params.layers[:params.depth]:
        activations.append(np.maximum(activations[-1] @ w.T + b, 0.0))
    return activations


def _heads_forward(params, hidden, heads):
    if params.config.num_heads == 1:
        w, b = params.heads[0]
        return hidden @ w.T + b
    logits = np.empty((hidden.shape[0], params.config.num_classes))
    for h in np.unique(heads):
        rows = heads == h
        w, b = params.heads[h]
        logits[rows] = hidden[rows] @ w.T + b
    return logits


def forward_batch(params, X, task_ids=0):
    """Logits for every row of ``X``; ``task_ids`` is a scalar or one id per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.config.input_dim:
        raise ShapeError("expected inputs of shape (n, {}), got {}".format(params.config.input_dim, X.shape))
    heads = _resolve_heads(params, task_ids, X.shape[0])
    return _heads_forward(params, _trunk_forward(params, X)[-1], heads)


def forward(params, x, task_id=0):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.config.input_dim:
        raise ShapeError("expected an input vector of length {}, got shape {}".format(
            params.config.input_dim, x.shape))
    params.head_index(task_id)
    return forward_batch(params, x[None, :], task_id)[0]


def _check_temperature(tau):
    if not tau > 0:
        raise ParameterError("temperature must be > 0, got {}".format(tau))


def log_softmax(logits, tau=1.0):
    _check_temperature(tau)
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_temp(logits, tau=1.0):
    _check_temperature(tau)
    z = np.asarray(logits, dtype=np.float64) / tau
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, y):
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= int(y) < logits.shape[-1]:
        raise LabelError("label {} outside [0, {})".format(y, logits.shape[-1]))
    return float(-log_softmax(logits)[int(y)])


def kl_temp(teacher_logits, student_logits, tau):
    """KL(softmax(teacher / tau) || softmax(student / tau))."""
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    student_logits = np.asarray(student_logits, dtype=np.float64)
    if teacher_logits.shape != student_logits.shape:
        raise ShapeError("logit shapes differ: {} vs {}".format(teacher_logits.shape, student_logits.shape))
    log_p = log_softmax(teacher_logits, tau)
    return float(np.sum(np.exp(log_p) * (log_p - log_softmax(student_logits, tau))))


def stack_batch(batch, num_classes):
    """Turn a list of examples into (X, y, task_ids, stored_dists, has_dist) arrays."""
    n = len(batch)
    X = np.stack([np.asarray(ex.x, dtype=np.float64) for ex in batch])
    y = np.fromiter((ex.y for ex in batch), dtype=np.int64, count=n)
    task_ids = np.fromiter((ex.task_id for ex in batch), dtype=np.int64, count=n)
    has_dist = np.fromiter((ex.stored_dist is not None for ex in batch), dtype=bool, count=n)
    dists = np.zeros((n, num_classes))
    for i in np.flatnonzero(has_dist):
        dist = np.asarray(batch[i].stored_dist, dtype=np.float64)
        if dist.shape != (num_classes,):
            raise ShapeError("stored distribution has shape {}, expected ({},)".format(dist.shape, num_classes))
        dists[i] = dist
    return X, y, task_ids, dists, has_dist


def loss_and_grads(params, X, y, task_ids, loss_cfg, dists=None, has_dist=None):
    """Mean cross-entropy plus reg_weight * KL_tau(stored || current) and its exact gradient."""
    n = X.shape[0]
    if n == 0:
        raise UsageError("cannot compute a loss over an empty batch")
    num_classes = params.config.num_classes
    if y.min() < 0 or y.max() >= num_classes:
        raise LabelError("labels must lie in [0, {})".format(num_classes))
    heads = _resolve_heads(params, task_ids, n)
    activations = _trunk_forward(params, X)
    logits = _heads_forward(params, activations[-1], heads)

    rows = np.arange(n)
    log_p = log_softmax(logits)
    loss_rows = -log_p[rows, y]
    dlogits = np.exp(log_p)
    dlogits[rows, y] -= 1.0

    if has_dist is not None and loss_cfg.reg_weight > 0 and has_dist.any():
        tau = loss_cfg.temperature
        target = dists[has_dist]
        log_q = log_softmax(logits[has_dist], tau)
        safe = np.where(target > 0, target, 1.0)
        kl = np.sum(target * (np.log(safe) - log_q), axis=1)
        loss_rows[has_dist] += loss_cfg.reg_weight * kl
        dlogits[has_dist] += loss_cfg.reg_weight * (np.exp(log_q) - target) / tau

    dlogits /= n
    return float(loss_rows.mean()), _backward(params, activations, heads, dlogits)


def _backward(params, activations, heads, dlogits):
    depth = params.depth
    grads: List[Optional[Layer]] = [None] * len(params.layers)
    hidden = activations[-1]
    if params.config.num_heads == 1:
        w, _ = params.heads[0]
        grads[depth] = (dlogits.T @ hidden, dlogits.sum(axis=0))
        d_hidden = dlogits @ w
    else:
        d_hidden = np.zeros_like(hidden)
        for h, (w, b) in enumerate(params.heads):
            rows = heads == h
            if not rows.any():
                grads[depth + h] = (np.zeros_like(w), np.zeros_like(b))
                continue
            g = dlogits[rows]
            grads[depth + h] = (g.T @ hidden[rows], g.sum(axis=0))
            d_hidden[rows] = g @ w
    for i in reversed(range(depth)):
        dz = d_hidden * (activations[i + 1] > 0)
        grads[i] = (dz.T @ activations[i], dz.sum(axis=0))
        if i:
            d_hidden = dz @ params.layers[i][0]
    return Gradients(grads)


def grad_composite_loss(params, batch, loss_cfg, task_id=None):
    """
    Loss and gradients over a list of examples.

    Each example is scored with the head of its own ``task_id`` unless ``task_id``
    is given, in which case every example uses that head. Examples carrying a
    ``stored_dist`` add the distillation term.
    """
    if not batch:
        raise UsageError("cannot compute a loss over an empty batch")
    X, y, task_ids, dists, has_dist = stack_batch(batch, params.config.num_classes)
    if task_id is not None:
        task_ids = np.full(len(batch), task_id, dtype=np.int64)
    return loss_and_grads(params, X, y, task_ids, loss_cfg, dists, has_dist)


def sgd_step(params, grads, lr):
    if _signature(params.layers) != _signature(grads.layers):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not np.isfinite(lr):
        raise ParameterError("learning rate must be finite, got {}".format(lr))
    layers = [(w - lr * gw, b - lr * gb) for (w, b), (gw, gb) in zip(params.layers, grads.layers)]
    _check_finite(layers)
    return ModelParams(params.config, layers)


def interpolate(theta, phi_prime, beta):
    """Convex combination (1 - beta) * theta + beta * phi_prime, exact at both ends."""
    if _signature(theta.layers) != _signature(phi_prime.layers):
        raise ShapeError("cannot interpolate parameters of different shapes")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError("beta must lie in [0, 1], got {}".format(beta))
    keep = 1.0 - beta
    layers = [
        (keep * w + beta * wp, keep * b + beta * bp)
        for (w, b), (wp, bp) in zip(theta.layers, phi_prime.layers)
    ]
    _check_finite(layers)
    return ModelParams(theta.config, layers)


def params_close(a, b, rtol=1e-12, atol=0.0):
    return _signature(a.layers) == _signature(b.layers) and np.allclose(a.flat(), b.flat(), rtol=rtol, atol=atol)

