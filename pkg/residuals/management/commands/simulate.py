from residuals.import_utils import format_number, write_dataset
from residuals.management.base import SchemeCommand
from residuals.services.simulation import dataset_from_sample, run_simulation


class Command(SchemeCommand):
    help = "Simulate censored outcomes under an inspection scheme and score them with the true CDF."

    stochastic = True

    def add_arguments(self, parser):
        self.add_distribution_arguments(parser)
        self.add_scheme_arguments(parser)
        parser.add_argument("--n", type=int, required=True, help="Number of subjects.")
        parser.add_argument("--scheme-seed", type=int, default=None, help="Separate seed for the inspection process.")
        parser.add_argument("--out", required=True, help="CSV output path.")

    def run(self, **options):
        out_path = self.output_path(options["out"])
        event = self.distribution_from_options(options)
        scheme = self.scheme_from_options(options)

        result = run_simulation(
            event, scheme, options["n"], options["seed"], scheme_seed=options["scheme_seed"], threads=options["threads"]
        )
        write_dataset(
            dataset_from_sample(result.sample),
            out_path,
            extra_columns={
                "true_time": [format_number(value) for value in result.sample.t],
                "psr": [format_number(value) for value in result.psr],
            },
        )
        self.report(
            f"Simulated {result.n} outcomes under {scheme.label}: mean PSR {result.empirical_mean:.6f}, "
            f"variance {result.empirical_variance:.6f}. Saved {out_path}"
        )
