import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from residuals.censored import Dataset, Observation, Outcome
from residuals.exceptions import DataFormatError, DegenerateDataError, RankDeficientError
from residuals.serializers import load_model, save_model, write_json
from residuals.services.basis import BasisSpec, expand_covariates, parse_basis_spec
from residuals.services.distributions import AftSpec, FamilyKind
from residuals.services.fitting import (
    FitOptions,
    Optimizer,
    fit,
    fit_with_basis,
    fitted_cdf_per_subject,
    log_likelihood,
    log_likelihood_gradient,
    parameter_names,
    parameter_vector,
    source_covariates,
    spec_from_vector,
)
from residuals.services.schemes import CountDistribution, CountKind, preset_scheme
from residuals.services.simulation import simulate_dataset


def mixed_dataset():
    rng = np.random.default_rng(11)
    observations = []
    for index in range(60):
        z = float(rng.normal())
        t = float(np.exp(0.5 + 0.4 * z + 0.6 * np.log(rng.exponential())))
        kind = index % 4
        if kind == 0:
            outcome = Outcome.exact(t)
        elif kind == 1:
            outcome = Outcome.from_endpoints(math.floor(t), math.floor(t) + 1.0)
        elif kind == 2:
            outcome = Outcome.right(t * 0.7)
        else:
            outcome = Outcome.left(t * 1.5)
        observations.append(Observation(str(index), outcome, (z,), "a" if index % 3 else "b"))
    return Dataset(observations=tuple(observations), covariate_names=("z",))


class LikelihoodTests(SimpleTestCase):
    def test_gradient_matches_finite_differences(self):
        data = mixed_dataset()
        for family in (FamilyKind.WEIBULL, FamilyKind.LOGNORMAL, FamilyKind.LOGLOGISTIC, FamilyKind.EXPONENTIAL):
            with self.subTest(family=family):
                sigma = 1.0 if family is FamilyKind.EXPONENTIAL else 0.7
                spec = AftSpec(family, beta=(0.3,), mu=0.4, sigma=sigma, strata_offsets={"a": 0.0, "b": -0.2})
                vector = parameter_vector(spec)
                numeric = np.zeros_like(vector)
                for k in range(vector.size):
                    step = np.zeros_like(vector)
                    step[k] = 1e-6
                    numeric[k] = (
                        log_likelihood(spec_from_vector(vector + step, spec), data)
                        - log_likelihood(spec_from_vector(vector - step, spec), data)
                    ) / 2e-6
                np.testing.assert_allclose(log_likelihood_gradient(spec, data), numeric, rtol=1e-5, atol=1e-5)

    def test_parameter_layout(self):
        spec = AftSpec(FamilyKind.WEIBULL, beta=(1.0, 2.0), mu=0.5, sigma=2.0, strata_offsets={"x": 0.0, "y": 0.25})
        self.assertEqual(parameter_names(spec, ["age", "cd4"]), ["mu", "beta[age]", "beta[cd4]", "offset[y]", "log_sigma"])
        np.testing.assert_allclose(parameter_vector(spec), [0.5, 1.0, 2.0, 0.25, math.log(2.0)])
        self.assertEqual(spec_from_vector(parameter_vector(spec), spec), spec)


class FitTests(SimpleTestCase):
    def test_exponential_mle_has_closed_form(self):
        times = [0.3, 1.2, 2.5, 0.8, 4.1, 0.05, 1.9]
        data = Dataset(observations=tuple(Observation(str(i), Outcome.exact(t)) for i, t in enumerate(times)))
        model = fit(data, "exponential")
        self.assertTrue(model.converged)
        self.assertAlmostEqual(model.spec.mu, math.log(np.mean(times)), delta=1e-3)
        expected = -len(times) * math.log(np.mean(times)) - len(times)
        self.assertAlmostEqual(model.loglik, expected, places=5)

    def test_weibull_recovery_from_exact_data(self):
        truth = AftSpec(FamilyKind.WEIBULL, beta=(0.5, -0.3), mu=1.0, sigma=0.6)
        data, _ = simulate_dataset(truth, preset_scheme("s1"), 2000, seed=5)
        model = fit(data, "weibull")
        self.assertTrue(model.converged)
        self.assertAlmostEqual(model.spec.mu, 1.0, delta=0.06)
        self.assertAlmostEqual(model.spec.beta[0], 0.5, delta=0.05)
        self.assertAlmostEqual(model.spec.beta[1], -0.3, delta=0.05)
        self.assertAlmostEqual(model.spec.sigma, 0.6, delta=0.04)

    def test_fit_is_invariant_to_covariate_rescaling(self):
        truth = AftSpec(FamilyKind.LOGNORMAL, beta=(0.8,), mu=0.0, sigma=0.5)
        data, _ = simulate_dataset(truth, preset_scheme("s2"), 400, seed=8)
        scaled = data.with_covariates(["z1"], data.design_matrix() * 1000.0 + 50.0)
        first = fit(data, "lognormal")
        second = fit(scaled, "lognormal")
        self.assertAlmostEqual(first.loglik, second.loglik, places=5)
        self.assertAlmostEqual(first.spec.beta[0], second.spec.beta[0] * 1000.0, places=3)

    def test_nelder_mead_agrees_with_quasi_newton(self):
        data = mixed_dataset()
        quasi = fit(data, "weibull")
        simplex = fit(data, "weibull", FitOptions(optimizer=Optimizer.NELDER_MEAD, max_iterations=4000))
        self.assertAlmostEqual(quasi.loglik, simplex.loglik, places=3)

    def test_fit_is_a_local_maximum(self):
        data = mixed_dataset()
        model = fit(data, "weibull")
        vector = parameter_vector(model.spec)
        rng = np.random.default_rng(32)
        for _ in range(32):
            moved = spec_from_vector(vector + rng.normal(0.0, 0.05, vector.size), model.spec)
            self.assertGreaterEqual(model.loglik + 1e-9, log_likelihood(moved, data))

    def test_fit_ignores_row_order(self):
        data = mixed_dataset()
        shuffled = data.subset(np.random.default_rng(5).permutation(len(data)))
        options = FitOptions(rel_tol=1e-15, gradient_tol=1e-7, max_iterations=2000)
        first = fit(data, "weibull", options)
        second = fit(shuffled, "weibull", options)
        self.assertAlmostEqual(first.loglik, second.loglik, delta=1e-8)

    def test_per_subject_handles_follow_row_order(self):
        times = [0.3, 1.2, 2.5, 0.8]
        data = Dataset(observations=tuple(Observation(str(i), Outcome.exact(t)) for i, t in enumerate(times)))
        handles = fitted_cdf_per_subject(fit(data, "exponential"), data)
        self.assertEqual(len(handles), len(times))
        self.assertEqual(len({handle.cdf(1.0) for handle in handles}), 1)
        self.assertEqual(handles[0].cdf(0.0), 0.0)

        truth = AftSpec(FamilyKind.WEIBULL, beta=(0.5,), mu=0.2, sigma=0.8)
        sample, _ = simulate_dataset(truth, preset_scheme("s1"), 300, seed=4)
        model = fit(sample, "weibull")
        z = sample.design_matrix()[:, 0]
        handles = fitted_cdf_per_subject(model, sample)
        self.assertGreater(model.spec.beta[0], 0.0)
        self.assertGreater(handles[int(np.argmin(z))].cdf(1.0), handles[int(np.argmax(z))].cdf(1.0))

    def test_all_right_censored_is_degenerate(self):
        data = Dataset(observations=tuple(Observation(str(i), Outcome.right(1.0 + i)) for i in range(5)))
        with self.assertRaises(DegenerateDataError):
            fit(data, "weibull")

    def test_uninformative_outcomes_are_degenerate(self):
        data = Dataset(observations=tuple(Observation(str(i), Outcome.right(0.0)) for i in range(5)))
        with self.assertRaises(DegenerateDataError):
            fit(data, "exponential")

    def test_collinear_covariates_are_rank_deficient(self):
        base = mixed_dataset()
        z = base.design_matrix()
        with self.assertRaises(RankDeficientError):
            fit(base.with_covariates(["z", "twice_z"], np.hstack([z, 2.0 * z])), "weibull")
        with self.assertRaises(RankDeficientError):
            fit(base.with_covariates(["flat"], np.ones((len(base), 1))), "weibull")

    @tag("slow")
    def test_interval_censored_recovery(self):
        truth = AftSpec(FamilyKind.WEIBULL, beta=(0.5, -0.3), mu=1.0, sigma=0.6)
        scheme = preset_scheme("s6", k_dist=CountDistribution(CountKind.GEOMETRIC, mean=4.0))
        data, _ = simulate_dataset(truth, scheme, 2000, seed=21)
        model = fit(data, "weibull")
        self.assertTrue(model.converged)
        self.assertAlmostEqual(model.spec.beta[0], 0.5, delta=0.1)
        self.assertAlmostEqual(model.spec.beta[1], -0.3, delta=0.1)
        self.assertAlmostEqual(model.spec.sigma, 0.6, delta=0.1)


class BasisTests(SimpleTestCase):
    def test_parse_basis_spec(self):
        self.assertEqual(parse_basis_spec("cd4:sqrt:pwl=18"), BasisSpec("cd4", "sqrt", "pwl", (18.0,)))
        self.assertEqual(parse_basis_spec("age:ns=4").n_knots, 4)

    def test_expansion_names_and_values(self):
        data = Dataset(
            observations=tuple(Observation(str(i), Outcome.exact(1.0), (float(v), 1.0)) for i, v in enumerate([100, 400, 625])),
            covariate_names=("cd4", "male"),
        )
        expanded, resolved = expand_covariates(data, [parse_basis_spec("cd4:sqrt:pwl=18")])
        self.assertEqual(expanded.covariate_names, ("sqrt_cd4", "sqrt_cd4_gt18", "male"))
        np.testing.assert_allclose(expanded.design_matrix()[:, :2], [[10, 0], [20, 2], [25, 7]])
        self.assertEqual(resolved[0].column_names(), ["sqrt_cd4", "sqrt_cd4_gt18"])

    def test_natural_spline_knots_are_resolved(self):
        values = np.linspace(1.0, 50.0, 40)
        data = Dataset(
            observations=tuple(Observation(str(i), Outcome.exact(1.0), (float(v),)) for i, v in enumerate(values)),
            covariate_names=("age",),
        )
        expanded, resolved = expand_covariates(data, [parse_basis_spec("age:ns=4")])
        self.assertEqual(len(resolved[0].knots), 4)
        self.assertEqual(expanded.covariate_names, ("age_ns1", "age_ns2", "age_ns3"))


class ModelFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_saved_model_reloads_identically(self):
        data = mixed_dataset()
        model = fit_with_basis(data, "loglogistic", basis=[BasisSpec("z", "identity", "pwl", (0.0,))])
        model = replace(model, strata_column="site")
        path = save_model(model, Path(self.tmp.name) / "model.json")
        again = load_model(path)
        self.assertEqual(again.spec, model.spec)
        self.assertEqual(again.covariate_names, model.covariate_names)
        self.assertEqual(again.basis, model.basis)
        self.assertEqual(again.options, model.options)
        self.assertEqual(again.loglik, model.loglik)
        self.assertEqual(again.strata_column, "site")
        self.assertEqual(source_covariates(again), ("z",))

    def test_model_file_validation(self):
        path = Path(self.tmp.name) / "bad.json"
        write_json({"schema_version": 1, "spec": {"family": "weibull"}}, path)
        with self.assertRaises(DataFormatError) as caught:
            load_model(path)
        self.assertIn("errors", caught.exception.detail)

        path.write_text("{not json", encoding="utf-8")
        with self.assertRaises(DataFormatError):
            load_model(path)
