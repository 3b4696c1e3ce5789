import importlib
import os

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULT_TRAINERS = {
    "bcl_dual": "bilevel_continual.trainers.BCLDualTrainer",
    "bcl_single": "bilevel_continual.trainers.BCLSingleTrainer",
    "er": "bilevel_continual.trainers.ERTrainer",
    "finetune": "bilevel_continual.trainers.FinetuneTrainer",
    "offline": "bilevel_continual.trainers.OfflineTrainer",
}

# Permuted-MNIST hyperparameters
TRAINER_DEFAULTS = {
    "inner_lr": 0.03,
    "outer_lr": 0.3,
    "n_inner": 2,
    "n_outer": 1,
    "batch_size": 10,
    "replay_batch": 128,
    "per_task_budget": 256,
    "gm_fraction": 0.2,
    "temperature": 5.0,
    "reg_weight": 100.0,
    "offline_epochs": 3,
    "single_steps": 1,
    "adapt_steps": 0,
    "adapt_lr": None,
}

DATA_ROOT_ENV = "BCL_DATA_ROOT"


def get_settings():
    if not settings.configured:
        return {}
    return getattr(settings, "BILEVEL_CONTINUAL", {})


def get_trainer_defaults():
    defaults = dict(TRAINER_DEFAULTS)
    defaults.update(get_settings().get("DEFAULTS", {}))
    return defaults


def get_trainer_paths():
    paths = dict(DEFAULT_TRAINERS)
    paths.update(get_settings().get("TRAINERS", {}))
    return {method: path for method, path in paths.items() if path}


def get_trainer_class(method):
    path = get_trainer_paths().get(method)
    if not path:
        raise ImproperlyConfigured("{} trainer not found".format(method))
    module, _, name = path.rpartition(".")
    return getattr(importlib.import_module(module), name)


def get_data_root():
    return get_settings().get("DATA_ROOT") or os.environ.get(DATA_ROOT_ENV)


def record_runs_enabled():
    return get_settings().get("RECORD_RUNS", False) is True


def audit_memory_enabled():
    return get_settings().get("AUDIT_MEMORY", False) is True
