from collections import Counter

from residuals.import_utils import ColumnMapping, parse_dataset
from residuals.management.base import PsrCommand
from residuals.serializers import load_model
from residuals.services.fitting import source_covariates
from residuals.services.psr import residuals_for_dataset, write_residuals


class Command(PsrCommand):
    help = "Compute probability-scale residuals of a fitted model on a dataset."

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="Model JSON written by `fit`.")
        parser.add_argument("--data", required=True, help="Input CSV with the model's raw covariates.")
        parser.add_argument("--companions", action="store_true", help="Add adjusted Cox-Snell and Lagakos residuals.")
        parser.add_argument("--transform", choices=["none", "normal"], default="none")
        parser.add_argument("--out", required=True, help="Residual CSV output path.")

    def run(self, **options):
        model = load_model(self.input_path(options["model"], "--model"))
        data_path = self.input_path(options["data"], "--data")
        out_path = self.output_path(options["out"])

        mapping = ColumnMapping(covariates=source_covariates(model), stratum=model.strata_column)
        data = parse_dataset(data_path, mapping)
        records = residuals_for_dataset(
            model,
            data,
            companions=options["companions"],
            transform=options["transform"] == "normal",
        )
        write_residuals(records, out_path)

        counts = Counter(record.outcome_class.value for record in records)
        summary = ", ".join(f"{name}={count}" for name, count in sorted(counts.items()))
        self.report(f"Wrote {len(records)} residuals ({summary}) to {out_path}")
