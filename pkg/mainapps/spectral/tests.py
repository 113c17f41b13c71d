import math

import numpy as np
from django.test import SimpleTestCase

from core.errors import DomainError, ParameterOutOfRange
from mainapps.hamiltonians.corpus import power_fixture, tilted_rank_one

from .convergence import BOUNDED, DIVERGENT, UNBOUNDED, VANISHING, endpoint_integral, limsup_estimate, tail_integral
from .growth import F, F0, M, M_HAT, fg_criterion, flip_check, inclusion_chain_check, kac_criterion, measure_class_report, winkler_threshold
from .measures import DensityPiece, SyntheticMeasure, double_arrow, poisson_integral
from .regvar import RegVarFunction, g_star, karamata_check, regvar_index_estimate, regvar_index_report
from .tauberian import (
    RELATIVE_SLACK,
    integration_by_parts_identity,
    lower_constant,
    poisson_tail_equivalence,
    tauberian_check,
    upper_constant,
)


POWER_PAIRS = ((1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (1.0, 3.0), (3.0, 1.0), (2.0, 3.0))


class MeasureTests(SimpleTestCase):
    def test_lebesgue_poisson_integral_is_pi(self):
        self.assertAlmostEqual(poisson_integral(SyntheticMeasure.lebesgue(), 3.0j), math.pi, places=12)

    def test_double_arrow_of_a_symmetric_power(self):
        mu = SyntheticMeasure.power_density(0.5)

        self.assertAlmostEqual(double_arrow(mu, 4.0), 2.0 * 8.0 / 1.5, places=12)

    def test_atoms_on_the_boundary_are_excluded(self):
        mu = SyntheticMeasure(atoms=((1.0, 2.0), (-0.5, 1.0)))

        self.assertEqual(double_arrow(mu, 1.0), 1.0)
        self.assertEqual(mu.total_mass, 3.0)

    def test_non_integrable_density_is_rejected(self):
        with self.assertRaises(DomainError):
            DensityPiece(0.0, 1.0, ((1.0, -1.0),))


class RegVarTests(SimpleTestCase):
    def test_g_star_of_a_power(self):
        g = RegVarFunction.power_function(1.0)

        self.assertAlmostEqual(g_star(g, 10.0), 9.0, places=12)
        self.assertAlmostEqual(g_star(RegVarFunction.power_function(2.0), math.e), 1.0, places=12)

    def test_karamata_part_one_for_r_log_r(self):
        report = karamata_check(RegVarFunction.log_power(1.0, 1.0), 0.0, tolerance=0.05)

        self.assertEqual(report.part, "i")
        self.assertTrue(report.ok, report.ratios)

    def test_karamata_part_two_for_a_power(self):
        report = karamata_check(RegVarFunction.power_function(0.5), -3.0)

        self.assertEqual(report.part, "ii")
        self.assertAlmostEqual(report.ratios[-1], 1.5, delta=1e-3)

    def test_index_of_r_log_r(self):
        g = RegVarFunction.log_power(1.0, 1.0)
        samples = [(r, g(r)) for r in np.geomspace(1e3, 1e9, 40)]

        estimate = regvar_index_report(samples)

        self.assertAlmostEqual(estimate.alpha, 1.0, delta=0.02)
        self.assertGreater(estimate.top_decade_slope, 1.0)

    def test_index_of_a_pure_power(self):
        g = RegVarFunction.power_function(1.5, 2.0)

        self.assertAlmostEqual(regvar_index_estimate([(r, g(r)) for r in np.geomspace(10.0, 1e6, 30)]), 1.5, places=6)

    def test_index_ratios_settle_for_a_power(self):
        self.assertTrue(RegVarFunction.power_function(1.5, 2.0).check_index())


class TauberianTests(SimpleTestCase):
    def test_constants_at_the_midpoint(self):
        self.assertAlmostEqual(lower_constant(1.0), 0.5, places=15)
        self.assertAlmostEqual(upper_constant(1.0), math.pi / 2.0, places=12)

    def test_upper_constant_needs_alpha_below_two(self):
        with self.assertRaises(ParameterOutOfRange):
            upper_constant(2.0)

    def test_lebesgue_attains_the_upper_bound(self):
        report = tauberian_check(SyntheticMeasure.lebesgue(), RegVarFunction.power_function(1.0))

        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.poisson_limsup, math.pi, delta=1e-3)
        self.assertAlmostEqual(report.counting_limsup, 2.0, places=12)
        self.assertAlmostEqual(report.upper_bound, math.pi, delta=1e-3)

    def test_square_root_density_attains_the_upper_bound(self):
        report = tauberian_check(SyntheticMeasure.power_density(0.5), RegVarFunction.power_function(1.5))

        self.assertTrue(report.ok)
        self.assertLess(abs(report.upper_slack), RELATIVE_SLACK * report.poisson_limsup)
        self.assertAlmostEqual(report.poisson_limsup, math.sqrt(2.0) * math.pi, delta=1e-3)

    def test_unit_atom_with_a_bounded_comparison_function(self):
        report = tauberian_check(SyntheticMeasure.unit_atom(), RegVarFunction.power_function(0.0))

        self.assertTrue(report.ok)
        self.assertIsNone(report.upper_bound)
        self.assertAlmostEqual(report.lower_bound, 1.0, places=12)

    def test_poisson_and_counting_tails_agree_for_lebesgue(self):
        for alpha in (1.0, 2.0):
            with self.subTest(alpha=alpha):
                result = poisson_tail_equivalence(SyntheticMeasure.lebesgue(), RegVarFunction.power_function(alpha))

                self.assertIs(result.agree, True)
                self.assertIs(result.poisson_side.convergent, alpha == 2.0)

    def test_parts_identity_is_exact(self):
        identity = integration_by_parts_identity([(0.0, 1.0), (1.0, 2.0)], [(0.5, 3.0), (1.0, 1.0)])

        self.assertTrue(identity.exact)
        self.assertEqual(identity.lhs, 4.0)

    def test_parts_identity_rejects_negative_masses(self):
        with self.assertRaises(ParameterOutOfRange):
            integration_by_parts_identity([(0.0, -1.0)], [(1.0, 1.0)])


class ConvergenceTests(SimpleTestCase):
    def test_tail_of_inverse_square(self):
        verdict = tail_integral(lambda r: r**-2, 1.0)

        self.assertTrue(verdict.convergent)
        self.assertAlmostEqual(verdict.value, 1.0, delta=1e-4)

    def test_tail_of_inverse_is_divergent(self):
        self.assertEqual(tail_integral(lambda r: 1.0 / r, 1.0).verdict, DIVERGENT)

    def test_endpoint_square_root_singularity(self):
        verdict = endpoint_integral(lambda t: t**-0.5, 0.0, 1.0)

        self.assertTrue(verdict.convergent)
        self.assertAlmostEqual(verdict.value, 2.0, delta=1e-4)

    def test_limsup_behaviours(self):
        s = np.geomspace(1.0, 1e8, 200)

        self.assertEqual(limsup_estimate(np.ones_like(s), s).behaviour, BOUNDED)
        self.assertEqual(limsup_estimate(1.0 / s, s).behaviour, VANISHING)
        self.assertEqual(limsup_estimate(np.sqrt(s), s).behaviour, UNBOUNDED)


class GrowthTests(SimpleTestCase):
    def test_power_fixture_thresholds(self):
        for rho1, rho2 in POWER_PAIRS:
            with self.subTest(rho1=rho1, rho2=rho2):
                self.assertAlmostEqual(winkler_threshold(power_fixture(rho1, rho2)).gamma0, 2.0 * rho2 / (rho1 + rho2))

    def test_verdicts_flip_across_the_threshold(self):
        for rho1, rho2 in POWER_PAIRS:
            H = power_fixture(rho1, rho2)
            gamma0 = winkler_threshold(H).gamma0
            with self.subTest(rho1=rho1, rho2=rho2):
                verdicts = flip_check(H, (gamma0 - 0.1, gamma0 + 0.1))

                self.assertEqual(verdicts[gamma0 - 0.1], (False, False))
                self.assertEqual(verdicts[gamma0 + 0.1], (True, True))

    def test_no_implication_is_contradicted(self):
        for rho1, rho2 in POWER_PAIRS:
            H = power_fixture(rho1, rho2)
            gamma0 = winkler_threshold(H).gamma0
            for gamma in (gamma0 - 0.1, gamma0 + 0.1):
                g = RegVarFunction.power_function(gamma)
                with self.subTest(rho1=rho1, rho2=rho2, gamma=gamma):
                    self.assertEqual(kac_criterion(H, g).violations(), [])
                    self.assertEqual(fg_criterion(H, g).violations(), [])

    def test_rank_one_start_threshold(self):
        result = winkler_threshold(tilted_rank_one())

        self.assertEqual(result.case, "rank_one")
        self.assertAlmostEqual(result.gamma0, 2.0 / 3.0, places=12)

    def test_rank_one_start_leaves_the_kac_conditions_apart(self):
        report = kac_criterion(tilted_rank_one(), RegVarFunction.power_function(2.0 / 3.0 + 0.2))

        self.assertIs(report.verdict("i"), False)
        self.assertIs(report.verdict("iii"), True)
        self.assertFalse(report.diagonally_dominant)
        self.assertIsNone(report.memberships[M])
        self.assertEqual(report.violations(), [])

    def test_inclusion_chain_for_lebesgue(self):
        report = inclusion_chain_check(
            SyntheticMeasure.lebesgue(), RegVarFunction.power_function(1.0), RegVarFunction.power_function(2.0)
        )
        chain = dict(report.chain)

        self.assertTrue(report.ok, report.broken)
        self.assertIs(chain["M[1*r^1]"], False)
        self.assertIs(chain["M[1*r^2]"], True)

    def test_inclusion_chain_needs_increasing_indices(self):
        with self.assertRaises(ParameterOutOfRange):
            inclusion_chain_check(
                SyntheticMeasure.lebesgue(), RegVarFunction.power_function(2.0), RegVarFunction.power_function(1.0)
            )

    def test_measure_side_classes_for_lebesgue(self):
        linear = measure_class_report(SyntheticMeasure.lebesgue(), RegVarFunction.power_function(1.0)).memberships
        quadratic = measure_class_report(SyntheticMeasure.lebesgue(), RegVarFunction.power_function(2.0)).memberships

        self.assertEqual((linear[M], linear[M_HAT], linear[F], linear[F0]), (False, False, True, False))
        self.assertEqual((quadratic[M], quadratic[M_HAT], quadratic[F], quadratic[F0]), (True, True, True, True))
