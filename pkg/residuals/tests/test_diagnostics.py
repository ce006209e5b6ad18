import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy import stats

from residuals.censored import Dataset, Observation, Outcome, OutcomeClass
from residuals.exceptions import (
    CensoredRecordsError,
    DataFormatError,
    DegenerateDataError,
    DimensionMismatchError,
    EmptySampleError,
    InvalidParameterError,
)
from residuals.serializers import TrendDataSerializer
from residuals.services.diagnostics import (
    covariate_for_records,
    index_plot,
    interior_mask,
    max_standardized_trend,
    qq_uniform,
    trend,
)
from residuals.services.distributions import LifetimeDistribution
from residuals.services.psr import ResidualRecord
from residuals.services.schemes import preset_scheme
from residuals.services.simulation import simulate_sample


class TrendTests(SimpleTestCase):
    def test_zero_residuals_give_a_flat_curve(self):
        x = np.linspace(0.0, 5.0, 50)
        data = trend(np.zeros(50), x)
        np.testing.assert_array_equal(data.fitted, 0.0)
        self.assertEqual(max_standardized_trend(data), 0.0)

    def test_linear_signal_is_reproduced(self):
        x = np.linspace(-1.0, 1.0, 200)
        data = trend(x, x, span=0.5)
        mask = interior_mask(data)
        np.testing.assert_allclose(data.fitted[mask], data.grid[mask], atol=0.02)
        self.assertEqual(data.neighbors, 100)

    def test_noisy_slope_stands_out_of_the_band(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0.0, 10.0, 500)
        y = np.clip(0.06 * (x - 5.0) + rng.normal(0.0, 0.2, 500), -1.0, 1.0)
        self.assertGreater(max_standardized_trend(trend(y, x)), 5.0)

    def test_pure_noise_stays_inside_the_band(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0.0, 10.0, 500)
        y = rng.uniform(-1.0, 1.0, 500)
        data = trend(y, x)
        self.assertLess(max_standardized_trend(data), 4.0)
        np.testing.assert_allclose(data.half_width, 1.96 * data.standard_error)

    @override_settings(PSR_RESIDUALS={"TREND_GRID_POINTS": 25, "LOESS_SPAN": 0.5})
    def test_defaults_come_from_settings(self):
        data = trend(np.zeros(40), np.arange(40.0))
        self.assertEqual(data.grid.size, 25)
        self.assertEqual(data.span, 0.5)

    def test_input_checks(self):
        x = np.arange(20.0)
        with self.assertRaises(EmptySampleError):
            trend(np.zeros(9), np.arange(9.0))
        with self.assertRaises(DegenerateDataError):
            trend(np.zeros(20), np.ones(20))
        with self.assertRaises(DimensionMismatchError):
            trend(np.zeros(19), x)
        for span in (0.0, 1.5):
            with self.subTest(span=span), self.assertRaises(InvalidParameterError):
                trend(np.zeros(20), x, span=span)

    def test_serialized_trend(self):
        x = np.arange(30.0)
        classes = [OutcomeClass.RIGHT] * 10 + [OutcomeClass.EXACT] * 20
        payload = TrendDataSerializer(trend(np.zeros(30), x, classes, grid_points=12, name="age")).data
        self.assertEqual(payload["covariate"], "age")
        self.assertEqual(len(payload["points"]), 30)
        self.assertEqual(payload["points"][0]["class"], "right")
        self.assertEqual(len(payload["curve"]), 12)


class QqTests(SimpleTestCase):
    def test_perfect_quantiles(self):
        n = 40
        quantiles = 2.0 * (np.arange(1, n + 1) - 0.5) / n - 1.0
        self.assertLessEqual(qq_uniform(quantiles[::-1]).max_deviation, 1.0 / n)

    def test_uniform_sample_is_close(self):
        sample = np.random.default_rng(3).uniform(-1.0, 1.0, 10_000)
        self.assertLess(qq_uniform(sample).max_deviation, 0.03)

    def test_censored_records_are_refused(self):
        with self.assertRaises(CensoredRecordsError):
            qq_uniform([0.1, 0.2], [OutcomeClass.EXACT, OutcomeClass.RIGHT])
        with self.assertRaises(EmptySampleError):
            qq_uniform([])


class IndexPlotTests(SimpleTestCase):
    def test_flags_use_the_normal_scale(self):
        classes = [OutcomeClass.EXACT, OutcomeClass.INTERVAL, OutcomeClass.EXACT, OutcomeClass.RIGHT]
        rows = index_plot([0.0, 0.99, -0.99, 0.5], classes)
        self.assertEqual([row.index for row in rows], [1, 2, 3, 4])
        self.assertEqual([row.flagged for row in rows], [False, True, True, False])
        self.assertAlmostEqual(rows[1].value, 2.5758293035489, places=9)

        raw = index_plot([0.0, 0.99, -0.99, 0.5], classes, transform=False)
        self.assertEqual([row.value for row in raw], [0.0, 0.99, -0.99, 0.5])
        self.assertEqual([row.flagged for row in raw], [False, True, True, False])

    def test_threshold_and_lengths(self):
        rows = index_plot([0.5], [OutcomeClass.EXACT], threshold=0.5)
        self.assertTrue(rows[0].flagged)
        with self.assertRaises(DimensionMismatchError):
            index_plot([0.5, 0.1], [OutcomeClass.EXACT])

    def test_flag_count_under_the_true_model(self):
        n = 1380
        F = LifetimeDistribution.exponential(1.0)
        psr = simulate_sample(F, preset_scheme("s1"), n, seed=1380).psr(F)
        flagged = sum(row.flagged for row in index_plot(psr, [OutcomeClass.EXACT] * n))
        p = 2.0 * stats.norm.sf(2.0)
        self.assertAlmostEqual(n * p, 63.0, delta=0.5)
        self.assertLess(abs(flagged - n * p), 4.0 * math.sqrt(n * p * (1.0 - p)))


class CovariateAlignmentTests(SimpleTestCase):
    def setUp(self):
        self.data = Dataset(
            observations=tuple(
                Observation(name, Outcome.exact(1.0), (value,)) for name, value in (("a", 1.0), ("b", 2.0), ("c", 3.0))
            ),
            covariate_names=("z",),
        )

    def test_values_follow_record_order(self):
        records = [ResidualRecord("c", OutcomeClass.EXACT, 0.1), ResidualRecord("a", OutcomeClass.EXACT, -0.2)]
        np.testing.assert_array_equal(covariate_for_records(records, self.data, "z"), [3.0, 1.0])

    def test_unknown_id_or_column(self):
        with self.assertRaises(DataFormatError):
            covariate_for_records([ResidualRecord("x", OutcomeClass.EXACT, 0.0)], self.data, "z")
        with self.assertRaises(DimensionMismatchError):
            covariate_for_records([], self.data, "w")
