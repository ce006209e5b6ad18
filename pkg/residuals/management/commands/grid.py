from residuals.exceptions import UsageError
from residuals.import_utils import format_number, write_csv_rows
from residuals.management.base import PsrCommand
from residuals.serializers import LimitReportSerializer, write_json
from residuals.services.grid import LIMIT_X_GRID, GridSetting, grid_atoms, grid_limit_check, grid_psr_cdf


class Command(PsrCommand):
    help = "Exact PSR law for exponential times inspected on an equally spaced grid."

    def add_arguments(self, parser):
        parser.add_argument("--lambda", dest="lam", type=float, required=True, help="Exponential rate.")
        parser.add_argument(
            "--tau", type=float, nargs="+", required=True, help="Grid spacing; several strictly decreasing values for --emit limit."
        )
        parser.add_argument("--emit", choices=["cdf", "atoms", "limit"], default="cdf")
        parser.add_argument("--tail-tol", type=float, default=1e-12, help="Remaining mass at which the atom table stops.")
        parser.add_argument("--out", required=True, help="CSV output path (JSON for --emit limit).")

    def run(self, **options):
        out_path = self.output_path(options["out"])
        settings = [GridSetting(options["lam"], tau) for tau in options["tau"]]
        emit = options["emit"]
        if emit != "limit" and len(settings) > 1:
            raise UsageError(f"--emit {emit} takes a single --tau")

        if emit == "limit":
            report = grid_limit_check(settings)
            write_json(LimitReportSerializer(report).data, out_path)
            self.report(f"Limit check over {len(settings)} grids (decreasing={report.decreasing}). Saved {out_path}")
            return

        setting = settings[0]
        if emit == "cdf":
            values = grid_psr_cdf(setting, LIMIT_X_GRID)
            write_csv_rows(out_path, ["x", "cdf", "uniform_cdf"], [
                [format_number(x), format_number(value), format_number((x + 1.0) / 2.0)]
                for x, value in zip(LIMIT_X_GRID, values)
            ])
        else:
            atoms = grid_atoms(setting, options["tail_tol"])
            write_csv_rows(out_path, ["k", "psr", "probability"], [
                [str(int(k)), format_number(psr), format_number(p)]
                for k, psr, p in zip(atoms.k, atoms.psr, atoms.probability)
            ])
        self.report(f"Wrote grid {emit} for lambda={setting.lam:g}, tau={setting.tau:g} to {out_path}")
