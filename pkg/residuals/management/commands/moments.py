from residuals.exceptions import UsageError
from residuals.management.base import SchemeCommand
from residuals.serializers import MomentReportSerializer, SchemeMomentsSerializer, write_json
from residuals.services.moments import scheme_variance
from residuals.services.simulation import verify_properties


class Command(SchemeCommand):
    help = "Theoretical PSR mean and variance under an inspection scheme, optionally checked by simulation."

    def add_arguments(self, parser):
        self.add_distribution_arguments(parser)
        self.add_scheme_arguments(parser)
        parser.add_argument("--draws", type=int, default=None, help="Monte Carlo draws of the inspection process.")
        parser.add_argument("--seed", type=int, default=None, help="Root seed; required for Monte Carlo schemes.")
        parser.add_argument("--verify-n", type=int, default=None, help="Also simulate this many residuals and compare.")
        parser.add_argument("--out", required=True, help="JSON output path.")

    def run(self, **options):
        out_path = self.output_path(options["out"])
        event = self.distribution_from_options(options)
        scheme = self.scheme_from_options(options)
        needs_seed = options["verify_n"] is not None or not (scheme.all_exact or scheme.k_dist.fixed_value == 1)
        if needs_seed and options["seed"] is None:
            raise UsageError(f"scheme {scheme.label} is evaluated by simulation and needs --seed")
        seed = options["seed"] if options["seed"] is not None else 0

        if options["verify_n"] is not None:
            report = verify_properties(
                event, scheme, options["verify_n"], seed, draws=options["draws"], threads=options["threads"]
            )
            write_json(MomentReportSerializer(report).data, out_path)
            self.report(
                f"{scheme.label}: variance {report.theoretical_variance:.8f} vs empirical "
                f"{report.empirical_variance:.8f} (agrees={report.agrees}). Saved {out_path}"
            )
            return

        moments = scheme_variance(event, scheme, draws=options["draws"], seed=seed, threads=options["threads"])
        write_json(SchemeMomentsSerializer(moments).data, out_path)
        self.report(f"{scheme.label}: variance {moments.variance:.8f} ({moments.method}). Saved {out_path}")
