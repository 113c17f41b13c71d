import math

import numpy as np
from django.test import SimpleTestCase

from core.errors import IndivisibleStart, InvalidBracket, ParameterOutOfRange
from mainapps.hamiltonians.corpus import (
    FIXTURES,
    diagonal,
    get_fixture,
    identity,
    oscillating_angle,
    oscillating_nodes,
    split_prefix,
    tilted_rank_one,
    tilted_rank_one_rotated,
)
from mainapps.weyl_solver.solver import weyl_coefficient

from .bounds import (
    EstimatorConfig,
    a_via_string,
    bracket_bounds,
    compare_weyl_coefficients,
    comparison_constant,
    estimate_bundle,
    forms_consistent,
    r_hat,
    t_crit,
)
from .constants import Q_UPPER, abs_constant, check_q, kasahara_band, sigma


CFG = EstimatorConfig(q=0.2, root_tol=1e-10)
ANGLES = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)
ENVELOPE_FIXTURES = tuple(name for name, fixture in FIXTURES.items() if fixture.envelope_suite)


def loglog_slope(rs, values):
    return float(np.polyfit(np.log(rs), np.log(values), 1)[0])


class ConstantTests(SimpleTestCase):
    def test_sigma_at_default_q(self):
        self.assertAlmostEqual(sigma(0.2), 0.5625, places=15)

    def test_q_outside_the_admissible_range_is_rejected(self):
        for q in (0.0, 0.5, Q_UPPER):
            with self.subTest(q=q):
                with self.assertRaises(ParameterOutOfRange):
                    check_q(q)

    def test_config_validates_q(self):
        with self.assertRaises(ParameterOutOfRange):
            EstimatorConfig(q=0.5)

    def test_absolute_constant_is_smallest_on_the_imaginary_axis(self):
        self.assertLess(abs_constant(0.2, math.pi / 2), abs_constant(0.2, math.pi / 4))

    def test_kasahara_band_contains_the_unit_ratio(self):
        lower, upper = kasahara_band(0.2)

        self.assertLess(lower, 1.0 / 30.0)
        self.assertGreater(upper, 30.0)


class CriticalPointTests(SimpleTestCase):
    def test_identity_critical_point(self):
        bundle = estimate_bundle(identity(), 1.0, ANGLES, CFG)

        self.assertAlmostEqual(bundle.t_crit, 0.1, delta=1e-10)
        self.assertAlmostEqual(bundle.A, 1.0, places=12)
        self.assertAlmostEqual(bundle.L, 1.0, places=9)

    def test_diagonal_critical_point(self):
        bundle = estimate_bundle(diagonal(4.0, 1.0), 10.0, ANGLES, CFG)

        self.assertAlmostEqual(bundle.t_crit, 0.2 / 40.0, delta=1e-12)
        self.assertAlmostEqual(bundle.A, 2.0, places=12)
        self.assertAlmostEqual(bundle.L, 2.0, places=8)

    def test_indivisible_start_is_rejected(self):
        with self.assertRaises(IndivisibleStart):
            t_crit(split_prefix(), 1.0, CFG)

    def test_r_hat_inverts_t_crit(self):
        H = tilted_rank_one()
        for r in (1.0, 100.0, 1e4):
            with self.subTest(r=r):
                self.assertAlmostEqual(r_hat(H, t_crit(H, r, CFG), CFG) / r, 1.0, places=9)

    def test_alternative_forms_agree_on_the_corpus(self):
        for name in ENVELOPE_FIXTURES:
            for r in (1.0, 1e3):
                with self.subTest(fixture=name, r=r):
                    self.assertTrue(forms_consistent(estimate_bundle(get_fixture(name), r, ANGLES, CFG)))

    def test_string_route_reproduces_A(self):
        rng = np.random.default_rng(7)
        radii = 10.0 ** rng.uniform(0.0, 5.0, 30)
        for name in ENVELOPE_FIXTURES:
            H = get_fixture(name)
            for r in radii:
                with self.subTest(fixture=name, r=r):
                    A = estimate_bundle(H, r, (), CFG).A

                    self.assertLess(abs(a_via_string(H, r, CFG) - A), 1e-9 * A)


class EnvelopeTests(SimpleTestCase):
    def test_envelope_holds_on_the_corpus(self):
        radii = np.geomspace(1.0, 1e5, 12)
        for name in ENVELOPE_FIXTURES:
            H = get_fixture(name)
            for r in radii:
                bundle = estimate_bundle(H, r, ANGLES, CFG)
                for theta in ANGLES:
                    with self.subTest(fixture=name, r=r, theta=theta):
                        certified = weyl_coefficient(H, r * complex(math.cos(theta), math.sin(theta)), 1e-6)

                        self.assertLessEqual(certified.radius, 1e-6)
                        self.assertTrue(bundle.envelope(theta).check(certified.value, certified.radius))

    def test_dyadic_fixture_is_self_similar(self):
        H = get_fixture("dyadic_alternating")
        for r in np.geomspace(1.0, 1e3, 10):
            with self.subTest(r=r):
                L, L2 = estimate_bundle(H, r, (), CFG).L, estimate_bundle(H, 2.0 * r, (), CFG).L
                value, value2 = weyl_coefficient(H, 1j * r, 1e-8), weyl_coefficient(H, 2j * r, 1e-8)

                self.assertLess(abs(L2 - L), 1e-9 * max(L, 1e-12))
                self.assertLessEqual(abs(abs(value2.value) - abs(value.value)), 2.0 * max(value.radius, value2.radius) + 1e-12)

    def test_dyadic_fixture_levels(self):
        phi = math.pi / 4
        H = get_fixture("dyadic_alternating")
        alpha = CFG.q / math.sin(2.0 * phi)
        cot = 1.0 / math.tan(phi)
        for r, expected in ((alpha, 8.0 / 9.0 * cot), (1.5 * alpha, cot), (2.0 * alpha, 8.0 / 9.0 * cot)):
            with self.subTest(r=r):
                self.assertAlmostEqual(estimate_bundle(H, r, (), CFG).L, expected, delta=1e-9)

    def test_oscillating_fixture_tracks_the_angle(self):
        H = oscillating_angle()
        for n, (t_n, phi_n) in enumerate(oscillating_nodes()[:8], start=1):
            with self.subTest(n=n):
                L = estimate_bundle(H, CFG.q / t_n, (), CFG).L

                self.assertLessEqual(abs(L - math.cos(math.pi * phi_n / 2.0) ** 2), 3.0 * 4.0**-n)

    def test_tilted_fixture_slopes(self):
        H, H_rot = tilted_rank_one(2.0), tilted_rank_one_rotated(2.0)
        radii = np.geomspace(1e2, 1e6, 8)
        bundles = [estimate_bundle(H, r, (), CFG) for r in radii]
        rotated = [estimate_bundle(H_rot, r, (math.pi / 2,), CFG) for r in radii]
        im_q = [weyl_coefficient(H, 1j * r, 1e-10).value.imag for r in radii]
        certified_rot = [weyl_coefficient(H_rot, 1j * r, 1e-10) for r in radii]

        self.assertAlmostEqual(loglog_slope(radii, [b.A for b in bundles]), 0.0, delta=0.02)
        self.assertAlmostEqual(loglog_slope(radii, [b.L for b in bundles]), -1.0, delta=0.05)
        self.assertAlmostEqual(loglog_slope(radii, im_q), -1.0 / 3.0, delta=0.05)
        self.assertAlmostEqual(loglog_slope(radii, [b.A for b in rotated]), -1.0 / 3.0, delta=0.05)

        ratios = []
        for r, bundle, bundle_rot, im, certified in zip(radii, bundles, rotated, im_q, certified_rot):
            with self.subTest(r=r):
                self.assertLessEqual(bundle.L, bundle_rot.L)
                self.assertLessEqual(bundle_rot.L, im)
                self.assertTrue(bundle_rot.envelope(math.pi / 2).check(certified.value, certified.radius))
                self.assertLess(bundle_rot.A, 0.1 * bundle.A)
            ratios.append(certified.value.imag / im)
        self.assertGreater(min(ratios), 0.0)
        self.assertLess(max(ratios) / min(ratios), 2.0)


class BracketTests(SimpleTestCase):
    def test_bracket_bounds_contain_the_bundle(self):
        bounds = bracket_bounds(identity(), 1.0, (0.09, 0.11), math.pi / 2, CFG)

        self.assertTrue(bounds.contains(estimate_bundle(identity(), 1.0, (), CFG)))
        self.assertAlmostEqual(bounds.A_upper, 1.1, places=12)
        self.assertAlmostEqual(bounds.L_lower, 0.9, places=12)

    def test_bracket_right_of_t_crit_is_rejected(self):
        with self.assertRaises(InvalidBracket):
            bracket_bounds(identity(), 1.0, (0.2, 0.3), math.pi / 2, CFG)


class ComparisonTests(SimpleTestCase):
    def test_identity_against_a_scaled_diagonal(self):
        constant = comparison_constant(1.0, 1.25, 0.5, 0.5, q=0.2)

        self.assertAlmostEqual(constant.q1, 0.2, places=12)
        self.assertGreaterEqual(constant.C, abs_constant(0.2) ** 2)

    def test_measured_ratio_stays_below_the_constant(self):
        for H, H_tilde in ((identity(), diagonal(2.0, 0.5)), (diagonal(2.0, 0.5), identity())):
            with self.subTest(H=H.name):
                report = compare_weyl_coefficients(H, H_tilde, (1.0, 10.0, 100.0), q=0.2, eps=1e-8)

                self.assertEqual(len(report.rows), 3)
                self.assertTrue(report.ok)

    def test_constants_out_of_range_are_rejected(self):
        with self.assertRaises(ParameterOutOfRange):
            comparison_constant(10.0, 1.0, 10.0, 1.0, q=0.2)
