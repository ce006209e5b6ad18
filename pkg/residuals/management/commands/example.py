from residuals.import_utils import write_dataset
from residuals.management.base import PsrCommand
from residuals.services.simulation import synthetic_cohort


class Command(PsrCommand):
    help = "Write a synthetic partly-interval-censored example dataset."

    stochastic = True

    def add_arguments(self, parser):
        parser.add_argument("--kind", choices=["ccasanet-like"], default="ccasanet-like")
        parser.add_argument("--n", type=int, default=1380, help="Number of subjects.")
        parser.add_argument("--out", required=True, help="CSV output path.")

    def run(self, **options):
        out_path = self.output_path(options["out"])
        data = synthetic_cohort(n=options["n"], seed=options["seed"])
        write_dataset(data, out_path)
        self.report(
            f"Wrote {options['kind']} dataset with {len(data)} subjects to {out_path}. "
            "Fit with --covariates age,male,art_pi,cd4 --basis cd4:sqrt:pwl=18 --strata stratum"
        )
