import math

import numpy as np
from django.test import SimpleTestCase, tag

from residuals.exceptions import InvalidParameterError
from residuals.services.distributions import LifetimeDistribution
from residuals.services.grid import (
    GridSetting,
    grid_atoms,
    grid_limit_check,
    grid_psr,
    grid_psr_cdf,
    ks_discrete,
    simulate_grid_psr,
    sup_distance_to_uniform,
)
from residuals.services.psr import psr_interval


class GridLawTests(SimpleTestCase):
    def setUp(self):
        self.setting = GridSetting(lam=1.0, tau=0.5)

    def test_residual_values(self):
        q = math.exp(-0.5)
        self.assertAlmostEqual(grid_psr(self.setting, 0), -q, places=15)
        np.testing.assert_allclose(grid_psr(self.setting, np.arange(4)), 1.0 - q ** np.arange(4) * (1.0 + q))

    def test_residuals_match_the_interval_formula(self):
        F = LifetimeDistribution.exponential(self.setting.lam)
        tau = self.setting.tau
        for k in range(6):
            self.assertAlmostEqual(grid_psr(self.setting, k), psr_interval(F, k * tau, (k + 1) * tau), places=14)

    def test_cdf_at_atoms(self):
        q = self.setting.q
        for k in range(6):
            x = grid_psr(self.setting, k)
            self.assertAlmostEqual(grid_psr_cdf(self.setting, x), 1.0 - q ** (k + 1), places=12)

    def test_cdf_between_atoms_is_flat(self):
        below, above = grid_psr(self.setting, 2), grid_psr(self.setting, 3)
        mid = 0.5 * (below + above)
        self.assertEqual(grid_psr_cdf(self.setting, mid), grid_psr_cdf(self.setting, below))

    def test_cdf_is_zero_below_the_first_atom(self):
        self.assertEqual(grid_psr_cdf(self.setting, -0.99), 0.0)

    def test_cdf_just_below_the_first_atom_is_zero(self):
        first = grid_psr(self.setting, 0)
        self.assertEqual(grid_psr_cdf(self.setting, first - 1e-10), 0.0)
        self.assertAlmostEqual(grid_psr_cdf(self.setting, first), 1.0 - self.setting.q, places=12)

    def test_cdf_domain(self):
        with self.assertRaises(InvalidParameterError):
            grid_psr_cdf(self.setting, 1.0)
        with self.assertRaises(InvalidParameterError):
            GridSetting(lam=1.0, tau=0.0)
        with self.assertRaises(InvalidParameterError):
            grid_psr(self.setting, -1)

    def test_atoms_carry_all_the_mass(self):
        atoms = grid_atoms(self.setting, tail_tol=1e-12)
        self.assertAlmostEqual(float(atoms.probability.sum()) + atoms.tail_mass, 1.0, places=12)
        self.assertLess(atoms.tail_mass, 1e-12)
        self.assertTrue(np.all(np.diff(atoms.psr) > 0))

    def test_fine_grid_approaches_the_uniform_law(self):
        distance = sup_distance_to_uniform(GridSetting(lam=1.0, tau=0.001))
        self.assertLess(distance, 0.002)

    def test_limit_report_decreases(self):
        report = grid_limit_check([GridSetting(1.0, tau) for tau in (0.5, 0.1, 0.01, 0.001)])
        self.assertEqual(len(report.rows), 4)
        self.assertTrue(report.decreasing)
        with self.assertRaises(InvalidParameterError):
            grid_limit_check([GridSetting(1.0, 0.1), GridSetting(1.0, 0.5)])


class GridSimulationTests(SimpleTestCase):
    def test_simulated_residuals_follow_the_atoms(self):
        setting = GridSetting(lam=2.0, tau=0.1)
        atoms = grid_atoms(setting)
        samples = simulate_grid_psr(setting, 100_000, seed=4)
        self.assertLess(ks_discrete(samples, atoms.psr, atoms.probability), 0.01)

    def test_simulation_is_reproducible(self):
        setting = GridSetting(lam=1.0, tau=0.2)
        np.testing.assert_array_equal(
            simulate_grid_psr(setting, 1000, seed=8, threads=1), simulate_grid_psr(setting, 1000, seed=8, threads=3)
        )

    @tag("slow")
    def test_fine_grid_simulation(self):
        setting = GridSetting(lam=1.0, tau=0.001)
        atoms = grid_atoms(setting)
        samples = simulate_grid_psr(setting, 1_000_000, seed=10)
        self.assertLess(ks_discrete(samples, atoms.psr, atoms.probability), 0.002)
