# -*- coding: utf-8 -*-
from uuid import uuid4

from django.db import models


class ExperimentRun(models.Model):
    """
    Ledger of one (method, seed) training run. A run is created in running status
    when training starts and is marked done with its metrics or failed with the error.
    """

    STATUS_NEW = "new"
    STATUS_RUNNING = "running"
    STATUS_DONE = "done"
    STATUS_FAILED = "failed"

    RUN_STATUS = (
        (STATUS_NEW, "New"),
        (STATUS_RUNNING, "Running"),
        (STATUS_DONE, "Done"),
        (STATUS_FAILED, "Failed"),
    )
    id = models.UUIDField(
        default=uuid4, editable=False, primary_key=True, verbose_name="ID",
    )
    method = models.CharField(max_length=50)
    seed = models.IntegerField()
    benchmark = models.CharField(max_length=50)
    num_tasks = models.PositiveIntegerField()
    output_dir = models.CharField(max_length=500)
    status = models.CharField(choices=RUN_STATUS, default=STATUS_NEW, max_length=20)
    acc = models.FloatField(null=True, help_text="Average final accuracy")
    fm = models.FloatField(null=True, help_text="Forgetting measure")
    la = models.FloatField(null=True, help_text="Learning accuracy")
    acc_adapt = models.FloatField(null=True, help_text="Average final accuracy with test-time adaptation")
    wall_time = models.FloatField(null=True, help_text="Training seconds")
    error = models.TextField(null=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    def __str__(self):
        return "{} seed {} {} {}".format(self.method, self.seed, self.benchmark, self.status)

    @classmethod
    def start(cls, method, seed, benchmark, num_tasks, output_dir):
        return cls.objects.create(
            method=method,
            seed=seed,
            benchmark=benchmark,
            num_tasks=num_tasks,
            output_dir=str(output_dir),
            status=cls.STATUS_RUNNING,
        )

    def mark_done(self, summary, wall_time=None, acc_adapt=None):
        self.acc = summary.get("ACC")
        self.fm = summary.get("FM")
        self.la = summary.get("LA")
        self.acc_adapt = acc_adapt
        self.wall_time = wall_time
        self.status = self.STATUS_DONE
        self.save()

    def mark_failed(self, message):
        self.error = message
        self.status = self.STATUS_FAILED
        self.save()

    @classmethod
    def finished_for(cls, method):
        return cls.objects.filter(method=method, status=cls.STATUS_DONE).order_by("seed")
