"""``psr`` entry point: routes ``psr <subcommand> ...`` to the app's management commands."""

import os
import sys
from pathlib import Path

SUBCOMMANDS = ("fit", "residuals", "moments", "simulate", "grid", "diagnose", "example")

USAGE = """usage: psr <subcommand> [options]

subcommands:
  fit        fit a parametric AFT model to mixed-censored data
  residuals  probability-scale residuals of a fitted model
  moments    theoretical PSR variance under an inspection scheme
  simulate   simulate censored outcomes under a scheme
  grid       exact PSR law on an equally spaced inspection grid
  diagnose   trend, QQ or index-plot data from residuals
  example    synthetic partly-interval-censored dataset

Run `psr <subcommand> --help` for options."""


def run(argv=None) -> int:
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "psr_toolkit.settings")

    import django

    django.setup()

    from django.core.management import load_command_class
    from rest_framework.renderers import JSONRenderer

    from residuals import __version__
    from residuals.exceptions import UsageError

    prog = Path(argv[0]).name if argv else "psr"
    args = argv[1:]
    if not args or args[0] in ("-h", "--help", "help"):
        sys.stdout.write(USAGE + "\n")
        return 0
    if args[0] == "--version":
        sys.stdout.write(f"{prog} {__version__}\n")
        return 0

    name = args[0]
    if name not in SUBCOMMANDS:
        error = UsageError(f"unknown subcommand {name!r}", choices=list(SUBCOMMANDS))
        sys.stderr.write(JSONRenderer().render(error.as_dict()).decode() + "\n")
        return error.exit_code

    command = load_command_class("residuals", name)
    try:
        command.run_from_argv([prog, name, *args[1:]])
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
