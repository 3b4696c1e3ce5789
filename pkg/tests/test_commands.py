#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
import os
import tempfile
from io import StringIO
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from bilevel_continual import cli
from bilevel_continual.test_utils import synthetic_config


class TestRunCommand(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.tmp.name, "results")
        self.config_path = os.path.join(self.tmp.name, "experiment.json")
        self.write_config(synthetic_config(self.out))

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, raw):
        with open(self.config_path, "w") as fh:
            json.dump(raw, fh)

    def test_flags_override_config(self):
        other = os.path.join(self.tmp.name, "other")
        stdout = StringIO()
        call_command("run", config=self.config_path, out=other, methods="er", seeds="5", stdout=stdout)
        self.assertIn(other, stdout.getvalue())
        self.assertTrue(os.path.exists(os.path.join(other, "er", "seed5", "acc_matrix.csv")))
        self.assertFalse(os.path.exists(os.path.join(other, "bcl_dual")))
        self.assertFalse(os.path.exists(self.out))

    def test_invalid_config_is_reported_before_training(self):
        raw = synthetic_config(self.out)
        raw["trainer"]["gm_fraction"] = 1.5
        self.write_config(raw)
        with mock.patch("bilevel_continual.management.commands.run.run_experiment") as run:
            with self.assertRaisesMessage(CommandError, "trainer.gm_fraction"):
                call_command("run", config=self.config_path)
        run.assert_not_called()

    def test_unreadable_config(self):
        with self.assertRaises(CommandError):
            call_command("run", config=os.path.join(self.tmp.name, "missing.json"))
        with open(self.config_path, "w") as fh:
            fh.write("{not json")
        with self.assertRaises(CommandError):
            call_command("run", config=self.config_path)

    def test_bad_seed_flag(self):
        with self.assertRaisesMessage(CommandError, "--seeds"):
            call_command("run", config=self.config_path, seeds="one")

    @mock.patch("bilevel_continual.management.commands.run.run_experiment", return_value=1)
    def test_aborted_experiment(self, run):
        with self.assertRaisesMessage(CommandError, "aborted"):
            call_command("run", config=self.config_path)

    @mock.patch("bilevel_continual.management.commands.run.run_experiment", return_value=2)
    def test_missing_data(self, run):
        with self.assertRaises(CommandError) as ctx:
            call_command("run", config=self.config_path)
        self.assertEqual(ctx.exception.returncode, 2)


class TestMetricsCommand(TestCase):
    def test_prints_metrics(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "acc_matrix.csv")
            with open(path, "w") as fh:
                fh.write("after_task,task_0,task_1\n0,0.9,\n1,0.6,0.8\n")
            stdout = StringIO()
            call_command("metrics", matrix=path, stdout=stdout)
        lines = stdout.getvalue().splitlines()
        self.assertEqual(lines, ["ACC\t0.7000", "FM\t0.3000", "LA\t0.8500"])

    def test_single_task_forgetting_undefined(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "acc_matrix.csv")
            with open(path, "w") as fh:
                fh.write("after_task,task_0\n0,0.5\n")
            stdout = StringIO()
            call_command("metrics", matrix=path, stdout=stdout)
        self.assertIn("FM\tundefined", stdout.getvalue())

    def test_missing_matrix(self):
        with self.assertRaises(CommandError):
            call_command("metrics", matrix="/nonexistent/acc_matrix.csv")


class TestCli(TestCase):
    @mock.patch("django.core.management.execute_from_command_line")
    def test_main_dispatches_to_commands(self, execute):
        cli.main(["metrics", "--matrix", "m.csv"])
        execute.assert_called_once_with(["bcl", "metrics", "--matrix", "m.csv"])

    def test_configure_leaves_existing_settings(self):
        cli.configure()
        from django.conf import settings
        self.assertIn("django.contrib.admin", settings.INSTALLED_APPS)
