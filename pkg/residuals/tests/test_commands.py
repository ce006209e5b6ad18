import csv
import json
import math
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.test import SimpleTestCase

from residuals import __version__, cli
from residuals.exceptions import CensoredRecordsError, DataFormatError, UsageError
from residuals.serializers import load_model, read_json, write_json
from residuals.services.psr import read_residuals


def csv_rows(path):
    with Path(path).open(encoding="utf-8", newline="") as file_handle:
        return list(csv.DictReader(file_handle))


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        temporary = tempfile.TemporaryDirectory()
        self.addCleanup(temporary.cleanup)
        self.tmp = Path(temporary.name)

    def path(self, name: str) -> str:
        return str(self.tmp / name)

    def call(self, *args) -> str:
        out = StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()


class WorkflowTests(CommandTestCase):
    def test_example_fit_residuals_diagnose(self):
        data = self.path("cohort.csv")
        self.call("example", "--n", "300", "--seed", "5", "--out", data)
        self.assertEqual(len(csv_rows(data)), 300)

        model_path = self.path("model.json")
        output = self.call(
            "fit",
            "--data", data,
            "--dist", "weibull",
            "--covariates", "age,male,art_pi,cd4",
            "--basis", "cd4:sqrt:pwl=18",
            "--strata", "stratum",
            "--max-iterations", "2000",
            "--out", model_path,
        )
        self.assertIn("Fitted weibull model to 300 observations", output)
        model = load_model(model_path)
        self.assertEqual(model.strata_column, "stratum")
        self.assertEqual(model.covariate_names, ("age", "male", "art_pi", "sqrt_cd4", "sqrt_cd4_gt18"))

        residuals_path = self.path("residuals.csv")
        self.call(
            "residuals", "--model", model_path, "--data", data, "--companions", "--transform", "normal",
            "--out", residuals_path,
        )
        records = read_residuals(residuals_path)
        self.assertEqual(len(records), 300)
        self.assertTrue(all(-1.0 <= record.psr <= 1.0 for record in records))
        self.assertTrue(all(record.psr_normal is not None for record in records))

        trend_path = self.path("trend.json")
        self.call("diagnose", "--residuals", residuals_path, "--data", data, "--covariate", "cd4", "--out", trend_path)
        payload = read_json(trend_path)
        self.assertEqual(payload["covariate"], "cd4")
        self.assertEqual(len(payload["points"]), 300)

        index_path = self.path("index.csv")
        self.call("diagnose", "--residuals", residuals_path, "--kind", "index", "--scale", "psr", "--out", index_path)
        rows = csv_rows(index_path)
        self.assertEqual([row["id"] for row in rows], [record.id for record in records])

        with self.assertRaises(CensoredRecordsError):
            self.call("diagnose", "--residuals", residuals_path, "--kind", "qq", "--out", self.path("qq.csv"))
        self.call("diagnose", "--residuals", residuals_path, "--kind", "qq", "--exact-only", "--out", self.path("qq.csv"))
        exact = sum(record.outcome_class.value == "exact" for record in records)
        self.assertEqual(len(csv_rows(self.path("qq.csv"))), exact)

    def test_fit_writes_the_parsed_dataset(self):
        data = self.path("cohort.csv")
        self.call("example", "--n", "120", "--seed", "1", "--out", data)
        dump = self.path("dump.json")
        self.call("fit", "--data", data, "--dist", "exponential", "--covariates", "age", "--dump-json", dump,
                  "--out", self.path("model.json"))
        self.assertEqual(len(read_json(dump)["observations"]), 120)

    def test_missing_input_file(self):
        with self.assertRaises(DataFormatError):
            self.call("fit", "--data", self.path("absent.csv"), "--dist", "weibull", "--out", self.path("m.json"))


class SimulateCommandTests(CommandTestCase):
    def simulate(self, name, *extra):
        out = self.path(name)
        self.call(
            "simulate", "--dist", "exponential", "--rate", "1", "--scheme", "s6", "--n", "500", "--out", out, *extra
        )
        return Path(out).read_bytes()

    def test_same_seed_same_bytes(self):
        first = self.simulate("a.csv", "--seed", "4")
        self.assertEqual(first, self.simulate("b.csv", "--seed", "4", "--threads", "3"))
        self.assertNotEqual(first, self.simulate("c.csv", "--seed", "5"))

    def test_output_columns(self):
        self.simulate("a.csv", "--seed", "4")
        rows = csv_rows(self.path("a.csv"))
        self.assertEqual(len(rows), 500)
        self.assertIn("true_time", rows[0])
        self.assertTrue(all(-1.0 <= float(row["psr"]) <= 1.0 for row in rows))

    def test_seed_is_required(self):
        with self.assertRaises(UsageError):
            self.simulate("a.csv")


class MomentsCommandTests(CommandTestCase):
    def moments(self, *args):
        out = self.path("moments.json")
        self.call("moments", "--dist", "exponential", *args, "--out", out)
        return read_json(out)

    def test_uncensored_variance(self):
        payload = self.moments("--rate", "1", "--scheme", "s1")
        self.assertAlmostEqual(payload["variance"], 1.0 / 3.0, places=12)
        self.assertEqual(payload["mean"], 0.0)

    def test_current_status_variance(self):
        payload = self.moments("--lambda", "1", "--scheme", "s5")
        self.assertAlmostEqual(payload["variance"], 1.0 / 6.0, places=9)

    def test_verify_writes_a_report(self):
        payload = self.moments("--rate", "1", "--scheme", "s2", "--verify-n", "5000", "--seed", "2")
        self.assertEqual(payload["n"], 5000)
        self.assertIn("agrees", payload)
        self.assertAlmostEqual(payload["theoretical_variance"], 0.25, places=9)

    def test_custom_scheme_file(self):
        scheme = self.path("scheme.json")
        write_json({"k_dist": {"kind": "fixed", "k": 1}, "gap_dist": {"kind": "fixed", "tau": 1.0}, "pi": [0.0]}, scheme)
        payload = self.moments("--rate", "1", "--scheme", scheme)
        f = 1.0 - math.exp(-1.0)
        self.assertEqual(payload["method"], "deterministic")
        self.assertAlmostEqual(payload["variance"], f * (1.0 - f), places=12)
        with self.assertRaises(UsageError):
            self.moments("--rate", "1", "--scheme", scheme, "--gap-tau", "0.5")

    def test_usage_errors(self):
        with self.assertRaises(UsageError):
            self.moments("--rate", "1", "--lambda", "2", "--scheme", "s1")
        with self.assertRaises(UsageError):
            self.moments("--rate", "1", "--scheme", "s6")
        with self.assertRaises(UsageError):
            self.moments("--rate", "1", "--scheme", "s2", "--censor-dist", "exponential", "--gap-tau", "1")
        with self.assertRaises(UsageError):
            self.moments("--rate", "1", "--scheme", "s1", "--bogus")


class GridCommandTests(CommandTestCase):
    def test_cdf_table(self):
        out = self.path("cdf.csv")
        self.call("grid", "--lambda", "1", "--tau", "0.001", "--out", out)
        rows = csv_rows(out)
        self.assertEqual(len(rows), 199)
        self.assertLess(max(abs(float(row["cdf"]) - float(row["uniform_cdf"])) for row in rows), 0.002)

    def test_atoms_table(self):
        out = self.path("atoms.csv")
        self.call("grid", "--lambda", "2", "--tau", "0.5", "--emit", "atoms", "--tail-tol", "1e-6", "--out", out)
        total = sum(float(row["probability"]) for row in csv_rows(out))
        self.assertAlmostEqual(total, 1.0, delta=1e-6)

    def test_limit_report(self):
        out = self.path("limit.json")
        self.call("grid", "--lambda", "1", "--tau", "0.5", "0.1", "0.01", "--emit", "limit", "--out", out)
        payload = read_json(out)
        self.assertTrue(payload["decreasing"])
        self.assertEqual([row["tau"] for row in payload["rows"]], [0.5, 0.1, 0.01])

    def test_single_tau_outside_limit(self):
        with self.assertRaises(UsageError):
            self.call("grid", "--lambda", "1", "--tau", "0.5", "0.1", "--out", self.path("cdf.csv"))


class EntryPointTests(SimpleTestCase):
    def run_cli(self, *argv):
        out, err = StringIO(), StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = cli.run(["psr", *argv])
        return code, out.getvalue(), err.getvalue()

    def test_version_and_help(self):
        code, out, _ = self.run_cli("--version")
        self.assertEqual((code, out), (0, f"psr {__version__}\n"))
        code, out, _ = self.run_cli()
        self.assertEqual(code, 0)
        self.assertIn("subcommands:", out)

    def test_unknown_subcommand(self):
        code, _, err = self.run_cli("tabulate")
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)["code"], "usage")

    def test_contract_violation_is_json_on_stderr(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _, err = self.run_cli(
                "fit", "--data", str(Path(tmp) / "absent.csv"), "--dist", "weibull", "--out", str(Path(tmp) / "m.json")
            )
        self.assertEqual(code, 2)
        payload = json.loads(err)
        self.assertEqual(payload["code"], "data_format")
        self.assertEqual(payload["option"], "--data")

    def test_argument_errors_are_usage_errors(self):
        code, _, err = self.run_cli("simulate", "--dist", "exponential")
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)["code"], "usage")
