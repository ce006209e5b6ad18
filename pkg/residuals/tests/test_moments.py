import math

import numpy as np
from django.test import SimpleTestCase, tag

from residuals.exceptions import InvalidParameterError, SchemeError, ZeroProbabilityIntervalError
from residuals.services.distributions import LifetimeDistribution
from residuals.services.moments import (
    CONTINUOUS_V,
    QuadratureMethod,
    closed_form_variance,
    conditional_variance,
    conditional_variance_terms,
    printed_s4_polynomial,
    s6_identity_variance,
    scheme_variance,
)
from residuals.services.schemes import CountDistribution, CountKind, GapDistribution, GapKind, preset_scheme

from .test_psr import random_family


class IntervalSpreadTests(SimpleTestCase):
    def test_substitution_gives_one_third(self):
        from residuals.services.moments import vj_quadrature

        rng = np.random.default_rng(5)
        for _ in range(200):
            F = random_family(rng)
            l = float(rng.exponential())
            u = l + float(rng.exponential())
            if F.cdf(u) - F.cdf(l) < 1e-2:
                continue
            self.assertAlmostEqual(vj_quadrature(F, l, u), CONTINUOUS_V, delta=1e-12)

    def test_direct_quadrature_agrees(self):
        from residuals.services.moments import vj_quadrature

        F = LifetimeDistribution.weibull(1.5, 2.0)
        finite = vj_quadrature(F, 0.5, 2.5, method=QuadratureMethod.GAUSS_LEGENDRE)
        self.assertAlmostEqual(finite, CONTINUOUS_V, delta=1e-8)
        tail = vj_quadrature(LifetimeDistribution.exponential(1.0), 1.0, math.inf, method=QuadratureMethod.GAUSS_LEGENDRE)
        self.assertAlmostEqual(tail, CONTINUOUS_V, delta=1e-5)

    def test_zero_probability_interval(self):
        from residuals.services.moments import vj_quadrature

        with self.assertRaises(ZeroProbabilityIntervalError):
            vj_quadrature(LifetimeDistribution.exponential(1.0), 1e6, 2e6)


class ReductionTests(SimpleTestCase):
    """The six canonical schemes against the general conditional variance."""

    def test_closed_forms_match_the_general_formula(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            F = random_family(rng)
            c = np.sort(F.quantile(rng.uniform(0.02, 0.98, size=4)))
            c1, c2 = float(c[0]), float(c[1])
            f1, f2 = float(F.cdf(c1)), float(F.cdf(c2))
            cases = [
                ("s1", [c1], [1.0, 1.0], [f1]),
                ("s2", [c1], [1.0, 0.0], [f1]),
                ("s3", [c1], [0.0, 1.0], [f1]),
                ("s4", [c1, c2], [0.0, 1.0, 0.0], [f1, f2]),
                ("s5", [c1], [0.0, 0.0], [f1]),
                ("s6", list(c), [0.0] * 5, list(F.cdf(c))),
            ]
            for preset, times, pi, values in cases:
                with self.subTest(preset=preset):
                    self.assertAlmostEqual(
                        closed_form_variance(preset, values), conditional_variance(F, times, pi), delta=1e-10
                    )

    def test_printed_doubly_censored_polynomial_disagrees(self):
        self.assertAlmostEqual(closed_form_variance("s4", [0.2, 0.6], v=0.0), 0.288, places=12)
        self.assertAlmostEqual(printed_s4_polynomial(0.2, 0.6, v=0.0), 0.192, places=12)

    def test_interval_censored_identity(self):
        rng = np.random.default_rng(4)
        for k in (1, 2, 5, 12):
            values = np.sort(rng.uniform(size=k))
            self.assertAlmostEqual(s6_identity_variance(values), closed_form_variance("s6", values), delta=1e-12)

    def test_single_inspection_interval_censoring_is_current_status(self):
        self.assertAlmostEqual(closed_form_variance("s6", [0.3]), closed_form_variance("s5", [0.3]), places=15)

    def test_bad_arguments(self):
        with self.assertRaises(InvalidParameterError):
            closed_form_variance("s2", [0.1, 0.2])
        with self.assertRaises(InvalidParameterError):
            closed_form_variance("s5", [1.2])
        with self.assertRaises(SchemeError):
            closed_form_variance("s9", [0.5])
        with self.assertRaises(InvalidParameterError):
            conditional_variance(LifetimeDistribution.exponential(1.0), [2.0, 1.0], [0, 0, 0])
        with self.assertRaises(InvalidParameterError):
            conditional_variance(LifetimeDistribution.exponential(1.0), [1.0], [0, 0, 0])

    def test_terms_sum_to_the_conditional_variance(self):
        F = LifetimeDistribution.loglogistic(2.0, 1.0)
        terms = conditional_variance_terms(F, [0.5, 1.0, 2.0], [0.5, 0.0, 1.0, 0.2])
        self.assertEqual([term.index for term in terms], [0, 1, 2, 3])
        self.assertAlmostEqual(sum(term.p for term in terms), 1.0, places=14)
        self.assertAlmostEqual(
            sum(term.contribution for term in terms), conditional_variance(F, [0.5, 1.0, 2.0], [0.5, 0.0, 1.0, 0.2])
        )


class SchemeVarianceTests(SimpleTestCase):
    def setUp(self):
        self.F = LifetimeDistribution.exponential(1.0)

    def test_uncensored_variance_is_one_third(self):
        moments = scheme_variance(self.F, preset_scheme("s1"))
        self.assertEqual(moments.variance, 1.0 / 3.0)
        self.assertEqual(moments.method, "closed-form")

    def test_single_inspection_schemes_with_exponential_censoring(self):
        # With T, C ~ Exp(1), F(C) is uniform, so the expectations are polynomial moments.
        expected = {"s2": 0.25, "s3": 0.25, "s5": 1.0 / 6.0}
        for preset, value in expected.items():
            with self.subTest(preset=preset):
                moments = scheme_variance(self.F, preset_scheme(preset))
                self.assertEqual(moments.method, "quadrature")
                self.assertAlmostEqual(moments.variance, value, places=9)

    def test_fixed_inspection_time_is_deterministic(self):
        scheme = preset_scheme("s5", gap_dist=GapDistribution(GapKind.FIXED, tau=1.0))
        moments = scheme_variance(self.F, scheme)
        f = 1.0 - math.exp(-1.0)
        self.assertEqual(moments.method, "deterministic")
        self.assertAlmostEqual(moments.variance, f * (1.0 - f), places=14)

    def test_monte_carlo_matches_an_independent_average(self):
        scheme = preset_scheme("s6")
        moments = scheme_variance(self.F, scheme, draws=20_000, seed=3)
        self.assertEqual(moments.method, "monte-carlo")
        self.assertEqual(moments.draws, 20_000)

        rng = np.random.default_rng(12345)
        times = np.cumsum(1.0 - rng.random((20_000, 3)), axis=1)
        values = np.array([closed_form_variance("s6", self.F.cdf(row)) for row in times])
        reference = values.mean()
        combined = math.hypot(moments.standard_error, values.std(ddof=1) / math.sqrt(values.size))
        self.assertLess(abs(moments.variance - reference), 4 * combined)

    def test_monte_carlo_is_reproducible_and_thread_independent(self):
        scheme = preset_scheme("s4")
        first = scheme_variance(self.F, scheme, draws=5_000, seed=9, threads=1)
        second = scheme_variance(self.F, scheme, draws=5_000, seed=9, threads=4)
        self.assertEqual(first.variance, second.variance)
        self.assertEqual(first.per_interval_terms, second.per_interval_terms)

    def test_geometric_count_is_simulated(self):
        scheme = preset_scheme("s6", k_dist=CountDistribution(CountKind.GEOMETRIC, mean=4.0))
        moments = scheme_variance(self.F, scheme, draws=2_000, seed=1)
        self.assertGreater(moments.variance, 0.0)
        self.assertLess(moments.variance, 1.0 / 3.0)
        self.assertGreater(moments.standard_error, 0.0)

    @tag("slow")
    def test_current_status_monte_carlo_matches_one_sixth(self):
        from residuals.services.simulation import run_simulation

        result = run_simulation(self.F, preset_scheme("s5"), 1_000_000, seed=2)
        squares = result.psr**2
        standard_error = squares.std(ddof=1) / math.sqrt(squares.size)
        self.assertLess(abs(squares.mean() - 1.0 / 6.0), 4 * standard_error)
