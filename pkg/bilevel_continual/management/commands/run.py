# -*- coding: utf-8 -*-
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from bilevel_continual.experiment import apply_flag_overrides, load_config, run_experiment, validate_config


def _format_errors(exc):
    return "; ".join(
        "{}: {}".format(key, " ".join(messages)) for key, messages in sorted(exc.message_dict.items())
    )


class Command(BaseCommand):
    help = "Train every configured method and seed, then write accuracy matrices and summary.csv"

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="JSON experiment config")
        parser.add_argument("--out", help="output directory, overrides output_dir")
        parser.add_argument("--methods", help="comma separated method names")
        parser.add_argument("--seeds", help="comma separated integer seeds")

    def handle(self, *args, **options):
        try:
            raw = load_config(options["config"])
        except (OSError, ValueError) as exc:
            raise CommandError("Cannot read config {}: {}".format(options["config"], exc))
        methods = options.get("methods")
        seeds = options.get("seeds")
        try:
            seeds = [int(seed) for seed in seeds.split(",")] if seeds else None
        except ValueError:
            raise CommandError("--seeds must be comma separated integers")
        raw = apply_flag_overrides(
            raw,
            output_dir=options.get("out"),
            methods=methods.split(",") if methods else None,
            seeds=seeds,
        )
        try:
            spec = validate_config(raw)
        except ValidationError as exc:
            raise CommandError("Invalid config: {}".format(_format_errors(exc)))

        status = run_experiment(spec)
        if status == 2:
            raise CommandError("Benchmark data could not be loaded", returncode=2)
        if status:
            raise CommandError("Experiment aborted, see log; partial results in {}".format(spec.output_dir))
        self.stdout.write(self.style.SUCCESS("Results written to {}".format(spec.output_dir)))
