# -*- coding: utf-8 -*-
"""
Experiment orchestration: validate a JSON config into an ``ExperimentSpec``, train
every (method, seed) pair and write per-run matrices plus an aggregate summary.

Output layout::

    <output_dir>/<method>/seed<k>/acc_matrix.csv
    <output_dir>/<method>/seed<k>/acc_matrix_adapt.csv   (adapt_steps > 0)
    <output_dir>/<method>/seed<k>/memory.json            (memory_snapshot)
    <output_dir>/<method>/seed<k>/run.json
    <output_dir>/summary.csv
"""
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from bilevel_continual.app_settings import (
    audit_memory_enabled,
    get_data_root,
    get_trainer_class,
    get_trainer_defaults,
    get_trainer_paths,
    record_runs_enabled,
)
from bilevel_continual.metrics import summarize
from bilevel_continual.nn import HEAD_MODES, SINGLE_HEAD, MLPConfig
from bilevel_continual.tasks import load_mnist_idx, make_permuted_stream, make_synthetic_stream
from bilevel_continual.trainers import TrainerConfig

logger = logging.getLogger(__name__)

PERMUTED_MNIST = "permuted_mnist"
SYNTHETIC = "synthetic"
BENCHMARKS = (PERMUTED_MNIST, SYNTHETIC)

DEFAULT_NUM_TASKS = {PERMUTED_MNIST: 23, SYNTHETIC: 3}
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
DATA_DEFAULTS = dict(MNIST_FILES, root=None, train_limit=None, test_limit=None)
SYNTHETIC_DEFAULTS = {
    "classes_per_task": 2,
    "samples": 500,
    "dim": 10,
    "separation": 5.0,
    "identical_tasks": False,
}
MODEL_DEFAULTS = {"hidden_dims": [128, 128, 128], "head_mode": SINGLE_HEAD}
TOP_LEVEL_DEFAULTS = {
    "benchmark": PERMUTED_MNIST,
    "num_tasks": None,
    "methods": ["bcl_dual"],
    "seeds": [0],
    "output_dir": "results",
    "data": {},
    "synthetic": {},
    "model": {},
    "trainer": {},
    "overrides": {},
    "memory_snapshot": False,
}
SUMMARY_COLUMNS = ["method", "n_seeds", "ACC_mean", "ACC_std", "FM_mean", "FM_std", "LA_mean", "LA_std"]


@dataclass(frozen=True)
class ExperimentSpec:
    benchmark: str
    num_tasks: int
    methods: Tuple[str, ...]
    seeds: Tuple[int, ...]
    output_dir: str
    data: Dict
    synthetic: Dict
    model: Dict
    trainer_configs: Dict[str, TrainerConfig]
    memory_snapshot: bool = False

    def trainer_config(self, method, seed):
        return replace(self.trainer_configs[method], seed=seed)

    def model_config(self, stream):
        return MLPConfig(
            input_dim=stream.input_dim,
            hidden_dims=tuple(self.model["hidden_dims"]),
            num_classes=stream.num_classes,
            head_mode=self.model["head_mode"],
            num_tasks=len(stream),
        )

    def data_path(self, key):
        path = self.data[key]
        root = self.data.get("root")
        if root and not os.path.isabs(path):
            path = os.path.join(root, path)
        if not os.path.exists(path) and os.path.exists(path + ".gz"):
            path += ".gz"
        return path


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _section(raw, name, defaults, errors):
    values = raw.get(name, {})
    if not isinstance(values, dict):
        errors.setdefault(name, []).append("must be an object")
        return dict(defaults)
    for key in sorted(set(values) - set(defaults)):
        errors.setdefault("{}.{}".format(name, key), []).append("unknown key")
    merged = dict(defaults)
    merged.update({key: value for key, value in values.items() if key in defaults})
    return merged


def validate_config(raw):
    """
    Check a raw config document and fill in defaults.

    :raises ValidationError: with ``message_dict`` keyed by dotted field path
    """
    errors = {}

    def fail(path, message):
        messages = errors.setdefault(path, [])
        if message not in messages:
            messages.append(message)

    if not isinstance(raw, dict):
        raise ValidationError({"config": ["must be a JSON object"]})
    for key in sorted(set(raw) - set(TOP_LEVEL_DEFAULTS)):
        fail(key, "unknown key")
    config = dict(TOP_LEVEL_DEFAULTS)
    config.update({key: value for key, value in raw.items() if key in TOP_LEVEL_DEFAULTS})

    benchmark = config["benchmark"]
    if benchmark not in BENCHMARKS:
        fail("benchmark", "must be one of {}".format(", ".join(BENCHMARKS)))
    num_tasks = config["num_tasks"]
    if num_tasks is None:
        num_tasks = DEFAULT_NUM_TASKS.get(benchmark, 1)
    elif not (_is_int(num_tasks) and num_tasks >= 1):
        fail("num_tasks", "must be an integer >= 1")

    known_methods = get_trainer_paths()
    methods = config["methods"]
    if not isinstance(methods, list) or not methods:
        fail("methods", "must be a non-empty list")
        methods = []
    for i, method in enumerate(methods):
        if not isinstance(method, str) or method not in known_methods:
            fail("methods.{}".format(i), "unknown method {!r}".format(method))
    seeds = config["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(_is_int(seed) for seed in seeds):
        fail("seeds", "must be a non-empty list of integers")
        seeds = []
    if not isinstance(config["output_dir"], str) or not config["output_dir"]:
        fail("output_dir", "must be a non-empty path")
    if not isinstance(config["memory_snapshot"], bool):
        fail("memory_snapshot", "must be true or false")

    data = _section(raw, "data", DATA_DEFAULTS, errors)
    if data["root"] is None:
        data["root"] = get_data_root()
    for key in ("train_limit", "test_limit"):
        if data[key] is not None and not (_is_int(data[key]) and data[key] >= 1):
            fail("data.{}".format(key), "must be null or an integer >= 1")

    synthetic = _section(raw, "synthetic", SYNTHETIC_DEFAULTS, errors)
    for key in ("classes_per_task", "dim"):
        if not (_is_int(synthetic[key]) and synthetic[key] >= 1):
            fail("synthetic.{}".format(key), "must be an integer >= 1")
    if not (_is_int(synthetic["samples"]) and synthetic["samples"] >= 2):
        fail("synthetic.samples", "must be an integer >= 2: one example per task is kept for testing")
    if not (isinstance(synthetic["separation"], (int, float)) and synthetic["separation"] > 0):
        fail("synthetic.separation", "must be a number > 0")

    model = _section(raw, "model", MODEL_DEFAULTS, errors)
    hidden = model["hidden_dims"]
    if not isinstance(hidden, list) or not all(_is_int(h) and h >= 1 for h in hidden):
        fail("model.hidden_dims", "must be a list of integers >= 1")
    if model["head_mode"] not in HEAD_MODES:
        fail("model.head_mode", "must be one of {}".format(", ".join(HEAD_MODES)))

    trainer_keys = set(TrainerConfig.field_names()) - {"method", "seed"}
    trainer = config["trainer"] if isinstance(config["trainer"], dict) else {}
    if not isinstance(config["trainer"], dict):
        fail("trainer", "must be an object")
    for key in sorted(set(trainer) - trainer_keys):
        fail("trainer.{}".format(key), "unknown key")
    overrides = config["overrides"] if isinstance(config["overrides"], dict) else {}
    if not isinstance(config["overrides"], dict):
        fail("overrides", "must be an object")
    for method, values in sorted(overrides.items()):
        if method not in known_methods:
            fail("overrides.{}".format(method), "unknown method")
        elif not isinstance(values, dict):
            fail("overrides.{}".format(method), "must be an object")
        else:
            for key in sorted(set(values) - trainer_keys):
                fail("overrides.{}.{}".format(method, key), "unknown key")

    trainer_configs = {}
    if not errors:
        for method in methods:
            method_overrides = overrides.get(method, {})
            values = get_trainer_defaults()
            values.update(trainer)
            values.update(method_overrides)
            values.update(method=method, seed=0)
            try:
                trainer_configs[method] = TrainerConfig.from_dict(values)
            except ValidationError as exc:
                for key, messages in exc.message_dict.items():
                    section = "overrides.{}".format(method) if key in method_overrides else "trainer"
                    for message in messages:
                        fail("{}.{}".format(section, key), message)

    if errors:
        raise ValidationError(errors)
    return ExperimentSpec(
        benchmark=benchmark,
        num_tasks=num_tasks,
        methods=tuple(methods),
        seeds=tuple(seeds),
        output_dir=config["output_dir"],
        data=data,
        synthetic=synthetic,
        model=model,
        trainer_configs=trainer_configs,
        memory_snapshot=config["memory_snapshot"],
    )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def apply_flag_overrides(raw, output_dir=None, methods=None, seeds=None):
    """Command-line flags beat the config document."""
    raw = dict(raw)
    if output_dir:
        raw["output_dir"] = output_dir
    if methods:
        raw["methods"] = list(methods)
    if seeds:
        raw["seeds"] = list(seeds)
    return raw


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_benchmark_data(spec):
    """Read benchmark files up front; raises OSError or a parse error before any training."""
    if spec.benchmark != PERMUTED_MNIST:
        return None
    train = load_mnist_idx(spec.data_path("train_images"), spec.data_path("train_labels"))
    test = load_mnist_idx(spec.data_path("test_images"), spec.data_path("test_labels"))
    return train, test


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return "", ""
    mean = repr(float(np.mean(values)))
    std = repr(float(np.std(values, ddof=1))) if len(values) > 1 else ""
    return mean, std


def summary_csv(results):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for method, summaries in results.items():
        if not summaries:
            continue
        row = [method, len(summaries)]
        for metric in ("ACC", "FM", "LA"):
            row.extend(_mean_std([summary[metric] for summary in summaries]))
        writer.writerow(row)
    return out.getvalue()


class ExperimentRunner:
    """
    Runs every (method, seed) pair of an experiment sequentially. Each run writes into its
    own directory, so finished runs stay on disk when a later run fails.
    """

    def __init__(self, spec, data=None):
        self.spec = spec
        self.data = data
        self.record_runs = record_runs_enabled()
        self.audit = audit_memory_enabled()

    def run_dir(self, method, seed):
        return os.path.join(self.spec.output_dir, method, "seed{}".format(seed))

    def build_stream(self, seed):
        spec = self.spec
        if spec.benchmark == PERMUTED_MNIST:
            train, test = self.data
            return make_permuted_stream(
                train, test, spec.num_tasks, seed,
                train_limit=spec.data["train_limit"], test_limit=spec.data["test_limit"],
            )
        return make_synthetic_stream(
            spec.num_tasks,
            spec.synthetic["classes_per_task"],
            spec.synthetic["samples"],
            spec.synthetic["dim"],
            spec.synthetic["separation"],
            seed,
            identical_tasks=spec.synthetic["identical_tasks"],
        )

    def run_one(self, method, seed):
        from bilevel_continual.models import ExperimentRun

        run_dir = self.run_dir(method, seed)
        record = None
        if self.record_runs:
            record = ExperimentRun.start(method, seed, self.spec.benchmark, self.spec.num_tasks, run_dir)
        try:
            stream = self.build_stream(seed)
            cfg = self.spec.trainer_config(method, seed)
            trainer = get_trainer_class(method)(stream, cfg, self.spec.model_config(stream), audit=self.audit)
            result = trainer.run()
        except Exception as exc:
            if record is not None:
                record.mark_failed(str(exc))
            raise

        summary = summarize(result.acc_matrix)
        atomic_write(os.path.join(run_dir, "acc_matrix.csv"), result.acc_matrix.to_csv())
        adapt_summary = None
        if result.adapt_matrix is not None:
            adapt_summary = summarize(result.adapt_matrix)
            atomic_write(os.path.join(run_dir, "acc_matrix_adapt.csv"), result.adapt_matrix.to_csv())
        if self.spec.memory_snapshot and result.memory is not None:
            atomic_write(os.path.join(run_dir, "memory.json"),
                         json.dumps(result.memory.snapshot(), indent=2, sort_keys=True) + "\n")
        payload = {
            "method": method,
            "seed": seed,
            "benchmark": self.spec.benchmark,
            "stream": stream.descriptor,
            "config": cfg.as_dict(),
            "model": {"hidden_dims": list(self.spec.model["hidden_dims"]), "head_mode": self.spec.model["head_mode"]},
            "metrics": summary,
            "adapt_metrics": adapt_summary,
            "wall_time": result.wall_time,
            "step_log": result.step_summary(),
        }
        atomic_write(os.path.join(run_dir, "run.json"), json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if record is not None:
            record.mark_done(summary, float(sum(result.wall_time)), adapt_summary and adapt_summary["ACC"])
        logger.info("%s seed %s: ACC=%s FM=%s LA=%s", method, seed, summary["ACC"], summary["FM"], summary["LA"])
        return summary

    def run(self):
        results = {method: [] for method in self.spec.methods}
        status = 0
        try:
            for method in self.spec.methods:
                for seed in self.spec.seeds:
                    results[method].append(self.run_one(method, seed))
        except Exception:
            logger.exception("Experiment aborted")
            status = 1
        atomic_write(os.path.join(self.spec.output_dir, "summary.csv"), summary_csv(results))
        return status


def run_experiment(spec):
    """Train every (method, seed) pair the experiment names; returns a process exit status."""
    try:
        data = load_benchmark_data(spec)
    except Exception:
        logger.exception("Unable to load %s data", spec.benchmark)
        return 2
    return ExperimentRunner(spec, data).run()
