from dataclasses import replace

from residuals.import_utils import ColumnMapping, parse_dataset
from residuals.management.base import PsrCommand
from residuals.serializers import DatasetSerializer, save_model, write_json
from residuals.services.basis import parse_basis_spec
from residuals.services.fitting import FitOptions, Optimizer, fit_with_basis


def split_names(raw: str | None) -> tuple[str, ...]:
    return tuple(name.strip() for name in (raw or "").split(",") if name.strip())


class Command(PsrCommand):
    help = "Fit a parametric AFT model to mixed-censored data and save it as JSON."

    def add_arguments(self, parser):
        parser.add_argument("--data", required=True, help="Input CSV (id, status, time, l, u, covariates...).")
        parser.add_argument("--dist", required=True, help="exponential, weibull, lognormal or loglogistic.")
        parser.add_argument("--covariates", default="", help="Comma-separated covariate columns.")
        parser.add_argument("--strata", default=None, help="Column holding the stratum label.")
        parser.add_argument(
            "--basis",
            action="append",
            default=[],
            help="Covariate expansion column[:sqrt|log][:pwl=k1,k2|:ns=K]. Repeat per column.",
        )
        parser.add_argument("--optimizer", choices=[o.value for o in Optimizer], default=None)
        parser.add_argument("--max-iterations", type=int, default=None)
        parser.add_argument("--rel-tol", type=float, default=None)
        parser.add_argument("--gradient-tol", type=float, default=None)
        parser.add_argument("--dump-json", default=None, help="Also write the parsed dataset as JSON.")
        parser.add_argument("--out", required=True, help="Model JSON output path.")

    def run(self, **options):
        data_path = self.input_path(options["data"], "--data")
        out_path = self.output_path(options["out"])
        mapping = ColumnMapping(covariates=split_names(options["covariates"]), stratum=options["strata"])
        basis = [parse_basis_spec(raw) for raw in options["basis"]]
        fit_options = FitOptions.from_settings(
            optimizer=options["optimizer"],
            max_iterations=options["max_iterations"],
            rel_tol=options["rel_tol"],
            gradient_tol=options["gradient_tol"],
        )

        data = parse_dataset(data_path, mapping)
        if options["dump_json"]:
            write_json(DatasetSerializer(data).data, self.output_path(options["dump_json"], "--dump-json"))

        model = fit_with_basis(data, options["dist"], fit_options, basis)
        model = replace(model, strata_column=options["strata"])
        save_model(model, out_path)
        self.report(
            f"Fitted {model.family.value} model to {len(data)} observations: "
            f"loglik={model.loglik:.6f}, converged={model.converged}. Saved {out_path}"
        )
