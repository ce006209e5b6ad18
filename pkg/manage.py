#!/usr/bin/env python
"""Django management entry point; the ``psr`` subcommands and the test runner live here too."""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "psr_toolkit.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install requirements.txt "
            "(Django, djangorestframework, numpy, scipy) first."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
