import logging
from pathlib import Path

from django.core.management.base import BaseCommand
from rest_framework.renderers import JSONRenderer

from residuals import __version__
from residuals.conf import resolve_output_path
from residuals.exceptions import DataFormatError, PsrError, UsageError
from residuals.serializers import read_json
from residuals.services.distributions import LifetimeDistribution
from residuals.services.random_streams import resolve_threads
from residuals.services.schemes import (
    PRESETS,
    GapDistribution,
    GapKind,
    InspectionScheme,
    preset_scheme,
    scheme_from_dict,
)

VERBOSITY_LEVELS = {0: logging.ERROR, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}

INTERNAL_ERROR_EXIT = 1


def _raise_usage(message):
    raise UsageError(message)


class PsrCommand(BaseCommand):
    """
    Shared plumbing for the ``psr`` subcommands.

    Contract violations leave as one line of JSON on stderr with the error's
    exit status; argument errors are :class:`UsageError` instead of argparse's
    usage dump.
    """

    stochastic = False
    requires_system_checks = []

    def get_version(self):
        return __version__

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = _raise_usage
        parser.add_argument("--threads", type=int, default=None, help="Worker threads for sharded computations.")
        if self.stochastic:
            parser.add_argument("--seed", type=int, default=None, help="Root seed (required).")
        return parser

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except PsrError as exc:
            self.write_error(exc.as_dict())
            raise SystemExit(exc.exit_code) from None
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as exc:  # noqa: BLE001
            self.write_error({"error": str(exc), "code": "internal"})
            raise SystemExit(INTERNAL_ERROR_EXIT) from None

    def write_error(self, payload: dict) -> None:
        self.stderr.write(JSONRenderer().render(payload).decode(), style_func=lambda message: message)

    def execute(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options.get("verbosity", 1), logging.DEBUG)
        logging.getLogger("residuals").setLevel(level)
        if self.stochastic and options.get("seed") is None:
            raise UsageError(f"{self.command_name()} needs --seed")
        options["threads"] = resolve_threads(options.get("threads"))
        return super().execute(*args, **options)

    def command_name(self) -> str:
        return self.__class__.__module__.rsplit(".", 1)[-1]

    # Argument helpers ---------------------------------------------------

    def input_path(self, raw: str | None, option: str) -> Path:
        if not raw:
            raise UsageError(f"{option} is required")
        path = Path(raw).expanduser().resolve()
        if not path.exists():
            raise DataFormatError(f"missing file: {path}", option=option)
        return path

    def output_path(self, raw: str | None, option: str = "--out") -> Path:
        if not raw:
            raise UsageError(f"{option} is required")
        return resolve_output_path(raw)

    def exclusive(self, options: dict, *names: str) -> None:
        given = [name for name in names if options.get(name) not in (None, False)]
        if len(given) > 1:
            flags = ", ".join(f"--{name.replace('_', '-')}" for name in given)
            raise UsageError(f"conflicting options: {flags}")

    def add_distribution_arguments(self, parser, prefix: str = "", required: bool = True) -> None:
        dash = f"--{prefix}-" if prefix else "--"
        dest = f"{prefix}_" if prefix else ""
        parser.add_argument(f"{dash}dist", dest=f"{dest}dist", required=required, help="Lifetime family.")
        parser.add_argument(f"{dash}rate", dest=f"{dest}rate", type=float, help="Exponential rate.")
        if not prefix:
            parser.add_argument("--lambda", dest="lam", type=float, help="Alias of --rate.")
        parser.add_argument(f"{dash}shape", dest=f"{dest}shape", type=float, help="Weibull/log-logistic shape.")
        parser.add_argument(f"{dash}scale", dest=f"{dest}scale", type=float, help="Weibull/log-logistic scale.")
        parser.add_argument(f"{dash}mu", dest=f"{dest}mu", type=float, help="Log-normal location.")
        parser.add_argument(f"{dash}sigma", dest=f"{dest}sigma", type=float, help="Log-normal scale.")

    def distribution_from_options(self, options: dict, prefix: str = "") -> LifetimeDistribution | None:
        dest = f"{prefix}_" if prefix else ""
        if not options.get(f"{dest}dist"):
            return None
        if not prefix and options.get("lam") is not None:
            if options.get("rate") is not None:
                raise UsageError("conflicting options: --rate, --lambda")
            options["rate"] = options["lam"]
        params = {
            name: options[f"{dest}{name}"]
            for name in ("rate", "shape", "scale", "mu", "sigma")
            if options.get(f"{dest}{name}") is not None
        }
        return LifetimeDistribution.from_parameters(options[f"{dest}dist"], **params)

    def report(self, message: str) -> None:
        if self.verbosity_level >= 1:
            self.stdout.write(self.style.SUCCESS(message))

    def handle(self, *args, **options):
        self.verbosity_level = options.get("verbosity", 1)
        return self.run(**options)

    def run(self, **options):
        raise NotImplementedError


class SchemeCommand(PsrCommand):
    """Commands that take an inspection scheme: a preset name or a scheme JSON file."""

    def add_scheme_arguments(self, parser) -> None:
        parser.add_argument("--scheme", required=True, help="s1..s6 or a scheme JSON file (k_dist, gap_dist, pi).")
        self.add_distribution_arguments(parser, prefix="censor", required=False)
        parser.add_argument("--gap-tau", type=float, default=None, help="Uniform (0, tau] inspection gaps.")

    def scheme_from_options(self, options: dict) -> InspectionScheme:
        self.exclusive(options, "censor_dist", "gap_tau")
        gap_dist = None
        if options.get("censor_dist"):
            gap_dist = GapDistribution(GapKind.LIFETIME, lifetime=self.distribution_from_options(options, "censor"))
        elif options.get("gap_tau") is not None:
            gap_dist = GapDistribution(GapKind.UNIFORM, tau=options["gap_tau"])

        raw = options["scheme"]
        if raw.strip().lower() in PRESETS:
            return preset_scheme(raw, gap_dist=gap_dist)
        if gap_dist is not None:
            raise UsageError("--censor-dist/--gap-tau only apply to preset schemes")
        return scheme_from_dict(read_json(self.input_path(raw, "--scheme")))
