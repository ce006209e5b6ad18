"""
Django settings for the psr_toolkit project.

The project has no web surface; Django provides configuration, the
management-command CLI and the test runner.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("PSR_SECRET_KEY", "psr-toolkit-offline-only")

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "rest_framework",
    "residuals",
]

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
    "COERCE_DECIMAL_TO_STRING": False,
}

# No database: every artifact is a CSV or JSON file.
DATABASES = {}

USE_TZ = True


# Residual toolkit configuration

PSR_RESIDUALS = {
    "FIT_MAX_ITERATIONS": 500,
    "FIT_REL_TOL": 1e-8,
    "FIT_GRADIENT_TOL": 1e-3,
    "FIT_OPTIMIZER": "quasi-newton",
    "PROBABILITY_FLOOR": 1e-300,
    "QUADRATURE_NODES": 64,
    "SCHEME_DRAWS": 100_000,
    "SHARD_SIZE": 65_536,
    "LOESS_SPAN": 0.75,
    "TREND_GRID_POINTS": 100,
    "OUTLIER_THRESHOLD": 2.0,
    "THREADS": int(os.environ.get("PSR_THREADS", "1")),
    "OUTPUT_DIR": os.environ.get("PSR_OUTPUT_DIR", ""),
}


# Logging

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "stderr": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "residuals": {
            "handlers": ["stderr"],
            "level": os.environ.get("PSR_LOG_LEVEL", "WARNING"),
            "propagate": False,
        },
    },
}
