# -*- coding: utf-8
from django.apps import AppConfig


class BilevelContinualConfig(AppConfig):
    name = 'bilevel_continual'
    default_auto_field = 'django.db.models.AutoField'
