# -*- coding: utf-8 -*-

from django.contrib import admin

from .models import (
   ExperimentRun
)


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("method", "seed", "benchmark", "status", "acc", "fm", "la", "created_at")
    list_filter = ("method", "status", "benchmark")
    readonly_fields = ("created_at", "updated_at")
