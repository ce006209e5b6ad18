from residuals.censored import OutcomeClass
from residuals.exceptions import UsageError
from residuals.import_utils import ColumnMapping, format_number, parse_dataset, write_csv_rows
from residuals.management.base import PsrCommand
from residuals.serializers import TrendDataSerializer, write_json
from residuals.services.diagnostics import covariate_for_records, index_plot, qq_uniform, trend
from residuals.services.psr import read_residuals


class Command(PsrCommand):
    help = "Diagnostic data from residuals: covariate trend, uniform QQ pairs or an index plot."

    def add_arguments(self, parser):
        parser.add_argument("--residuals", required=True, help="Residual CSV written by `residuals`.")
        parser.add_argument("--kind", choices=["trend", "qq", "index"], default="trend")
        parser.add_argument("--data", default=None, help="Input CSV holding the covariate (trend only).")
        parser.add_argument("--covariate", default=None, help="Covariate column to smooth against (trend only).")
        parser.add_argument("--span", type=float, default=None, help="Smoother span in (0, 1].")
        parser.add_argument("--exact-only", action="store_true", help="Keep exactly observed records only (qq).")
        parser.add_argument("--scale", choices=["psr", "normal"], default="normal", help="Index plot scale.")
        parser.add_argument("--threshold", type=float, default=None, help="Outlier flag on the normal scale.")
        parser.add_argument("--out", required=True, help="trend JSON, or qq/index CSV.")

    def run(self, **options):
        records = read_residuals(self.input_path(options["residuals"], "--residuals"))
        out_path = self.output_path(options["out"])
        kind = options["kind"]
        if kind != "trend" and (options["data"] or options["covariate"]):
            raise UsageError(f"--data/--covariate do not apply to --kind {kind}")

        if kind == "trend":
            if not (options["data"] and options["covariate"]):
                raise UsageError("trend needs --data and --covariate")
            name = options["covariate"]
            data = parse_dataset(self.input_path(options["data"], "--data"), ColumnMapping(covariates=(name,)))
            data_trend = trend(
                [record.psr for record in records],
                covariate_for_records(records, data, name),
                classes=[record.outcome_class for record in records],
                span=options["span"],
                name=name,
            )
            write_json(TrendDataSerializer(data_trend).data, out_path)
        elif kind == "qq":
            if options["exact_only"]:
                records = [record for record in records if record.outcome_class is OutcomeClass.EXACT]
            qq = qq_uniform([record.psr for record in records], [record.outcome_class for record in records])
            write_csv_rows(out_path, ["theoretical", "sample"], [
                [format_number(t), format_number(s)] for t, s in zip(qq.theoretical, qq.sample)
            ])
        else:
            rows = index_plot(
                [record.psr for record in records],
                [record.outcome_class for record in records],
                transform=options["scale"] == "normal",
                threshold=options["threshold"],
            )
            write_csv_rows(out_path, ["index", "id", "value", "class", "flagged"], [
                [str(row.index), record.id, format_number(row.value), row.outcome_class.value, str(int(row.flagged))]
                for row, record in zip(rows, records)
            ])
        self.report(f"Wrote {kind} diagnostics for {len(records)} residuals to {out_path}")
