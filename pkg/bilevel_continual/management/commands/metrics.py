# -*- coding: utf-8 -*-
from django.core.management.base import BaseCommand, CommandError

from bilevel_continual.exceptions import BilevelContinualError
from bilevel_continual.metrics import AccuracyMatrix, summarize


class Command(BaseCommand):
    help = "Print ACC, FM and LA for an acc_matrix.csv file"

    def add_arguments(self, parser):
        parser.add_argument("--matrix", required=True, help="accuracy matrix CSV")

    def handle(self, *args, **options):
        try:
            with open(options["matrix"], encoding="utf-8") as fh:
                matrix = AccuracyMatrix.from_csv(fh.read())
        except (OSError, ValueError, BilevelContinualError) as exc:
            raise CommandError("Cannot read {}: {}".format(options["matrix"], exc))
        for name, value in summarize(matrix).items():
            self.stdout.write("{}\t{}".format(name, "undefined" if value is None else "{:.4f}".format(value)))
