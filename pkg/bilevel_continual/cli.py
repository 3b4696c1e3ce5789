# -*- coding: utf-8 -*-
"""
Stand-alone entry point: ``bcl run --config exp.json`` and ``bcl metrics --matrix acc_matrix.csv``.

Outside a Django project the app is configured with an in-memory database and
run recording switched off.
"""
import os
import sys

import django
from django.conf import settings

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "bilevel_continual": {"handlers": ["console"], "level": os.environ.get("BCL_LOG_LEVEL", "INFO")},
    },
}


def configure():
    if settings.configured or os.environ.get("DJANGO_SETTINGS_MODULE"):
        return
    settings.configure(
        INSTALLED_APPS=["bilevel_continual"],
        DATABASES={"default": {"ENGINE": "django.db.backends.sqlite3", "NAME": ":memory:"}},
        BILEVEL_CONTINUAL={},
        LOGGING=LOGGING,
    )


def main(argv=None):
    from django.core.management import execute_from_command_line

    configure()
    django.setup()
    argv = sys.argv[1:] if argv is None else list(argv)
    execute_from_command_line(["bcl"] + argv)


if __name__ == "__main__":
    main()
