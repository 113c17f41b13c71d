import cmath
import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from core.errors import DegenerateDisc, DomainError, SlowShrink
from mainapps.hamiltonians.corpus import diagonal, get_fixture, identity, split_prefix, tilted_rank_one
from mainapps.hamiltonians.hamiltonian import Panel, PiecewiseConstantHamiltonian
from mainapps.hamiltonians.transforms import invert_JHJ, rotate, rotation_mobius

from .series import series_coefficients, verify_coefficient_bounds
from .solver import fundamental_solution, nabla, weyl_coefficient, weyl_disc


SOLVER_FIXTURES = (
    "identity",
    "diagonal_4_1",
    "alternating_rank_one",
    "dyadic_alternating",
    "tilted_rank_one",
    "split_prefix",
    "oscillating_angle",
)
ANGLES = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)

quarter = st.integers(min_value=0, max_value=12).map(lambda k: k / 4.0)
panel_rows = st.lists(
    st.tuples(
        st.integers(min_value=1, max_value=8).map(lambda k: k / 8.0),
        quarter,
        quarter,
        st.integers(min_value=-4, max_value=4).map(lambda k: k / 4.0),
    ),
    min_size=1,
    max_size=5,
)


def build_panels(rows):
    panels, start = [], 0.0
    for length, h1, h2, corr in rows:
        panels.append(Panel(start, start + length, h1, h2, corr * math.sqrt(h1 * h2)))
        start += length
    panels.append(Panel(start, math.inf, 1.0, 1.0, 0.0))
    return PiecewiseConstantHamiltonian(panels), start


class WeylCoefficientTests(SimpleTestCase):
    def test_identity_coefficient_is_i(self):
        H = identity()
        for r in (1.0, 100.0):
            for theta in ANGLES:
                with self.subTest(r=r, theta=theta):
                    certified = weyl_coefficient(H, r * cmath.exp(1j * theta), 1e-8)

                    self.assertLessEqual(certified.radius, 1e-8)
                    self.assertLessEqual(abs(certified.value - 1j), certified.radius + 1e-12)

    def test_diagonal_coefficient(self):
        certified = weyl_coefficient(diagonal(4.0, 1.0), 2.0 + 1.0j, 1e-8)

        self.assertLessEqual(abs(certified.value - 2.0j), certified.radius + 1e-12)

    def test_split_prefix_coefficient(self):
        z = 1.0 + 1.0j
        certified = weyl_coefficient(split_prefix(), z, 1e-8)

        self.assertLessEqual(abs(certified.value - (z + 1.0j)), certified.radius + 1e-10)

    def test_lower_half_plane_uses_the_conjugate(self):
        certified = weyl_coefficient(identity(), 1.0 - 1.0j, 1e-8)

        self.assertLessEqual(abs(certified.value + 1.0j), certified.radius + 1e-12)

    def test_real_argument_is_rejected(self):
        with self.assertRaises(DomainError):
            weyl_coefficient(identity(), 2.0)

    def test_inverted_system_has_the_negative_reciprocal_coefficient(self):
        certified = weyl_coefficient(invert_JHJ(diagonal(4.0, 1.0)), 1.0 + 2.0j, 1e-8)

        self.assertLessEqual(abs(certified.value - 0.5j), certified.radius + 1e-12)

    def test_rotated_system_follows_the_moebius_map(self):
        phi = 0.7
        certified = weyl_coefficient(rotate(diagonal(4.0, 1.0), phi), 1.0 + 1.0j, 1e-8)

        self.assertLessEqual(abs(certified.value - rotation_mobius(phi, 2.0j)), 1e-7)


class WeylDiscTests(SimpleTestCase):
    def test_fundamental_solution_has_unit_determinant(self):
        for name in SOLVER_FIXTURES:
            with self.subTest(fixture=name):
                W = fundamental_solution(get_fixture(name), 2.0, 1.0 + 1.0j)

                self.assertLess(abs(np.linalg.det(W) - 1.0), 1e-9)

    def test_constant_hamiltonian_matches_the_matrix_exponential(self):
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        z, t = 0.7 + 1.3j, 1.5
        for h1, h2 in ((1.0, 1.0), (4.0, 1.0)):
            with self.subTest(h1=h1, h2=h2):
                W = fundamental_solution(diagonal(h1, h2), t, z)

                np.testing.assert_allclose(W, expm(-z * t * np.diag([h1, h2]) @ J), atol=1e-10)

    def test_discs_are_nested_and_contain_the_coefficient(self):
        H, z = identity(), 1.0 + 1.0j
        discs = [weyl_disc(H, t, z) for t in (0.5, 1.0, 2.0, 4.0)]

        for outer, inner in zip(discs[:-1], discs[1:]):
            self.assertTrue(outer.contains_disc(inner, tol=1e-9))
        for disc in discs:
            self.assertTrue(disc.contains(1.0j, tol=1e-9))

    def test_diagonal_discs_contain_the_coefficient(self):
        H, z = diagonal(4.0, 1.0), 0.5 + 2.0j

        for t in (0.25, 1.0, 3.0):
            self.assertTrue(weyl_disc(H, t, z).contains(2.0j, tol=1e-9))

    def test_nabla_routes_agree(self):
        z = 1.0 + 1.0j
        for H in (identity(), diagonal(), split_prefix(), tilted_rank_one(), get_fixture("alternating_rank_one")):
            with self.subTest(fixture=H.name):
                algebraic = nabla(H, 2.0, z)
                quadrature = nabla(H, 2.0, z, route="quadrature")
                scale = 1.0 + np.max(np.abs(algebraic))

                self.assertLess(np.max(np.abs(algebraic - quadrature)), 1e-9 * scale)

    def test_vanishing_h2_gives_a_degenerate_disc(self):
        with self.assertRaises(DegenerateDisc):
            weyl_disc(diagonal(1.0, 0.0), 1.0, 1.0j)

    def test_rank_one_tail_without_h2_never_shrinks(self):
        with self.assertRaises(SlowShrink) as ctx:
            weyl_coefficient(diagonal(1.0, 0.0), 1.0j, 1e-8)

        self.assertEqual(ctx.exception.achieved_radius, math.inf)

    def test_nabla_needs_a_non_real_parameter(self):
        with self.assertRaises(DomainError):
            nabla(identity(), 1.0, 1.0)


class SeriesCoefficientTests(SimpleTestCase):
    def test_series_sums_to_the_fundamental_solution(self):
        z = 0.3 + 0.4j
        for H in (identity(), diagonal(), split_prefix(), tilted_rank_one()):
            with self.subTest(fixture=H.name):
                t = 0.1
                series = series_coefficients(H, t, 8)
                W = fundamental_solution(H, t, z)

                self.assertLess(np.max(np.abs(series.evaluate(z) - W)), 1e-10)

    def test_first_coefficient_is_minus_m_j(self):
        H = diagonal(4.0, 1.0)
        series = series_coefficients(H, 1.5, 2)

        np.testing.assert_allclose(series.W[1], np.array([[0.0, 6.0], [-1.5, 0.0]]), atol=1e-14)

    def test_negative_order_is_rejected(self):
        with self.assertRaises(DomainError):
            series_coefficients(identity(), 1.0, -1)

    def test_order_above_the_cap_is_rejected(self):
        with self.assertRaises(DomainError):
            verify_coefficient_bounds(identity(), 1.0, 50)

    def test_corpus_power_fixture_satisfies_every_bound(self):
        report = verify_coefficient_bounds(tilted_rank_one(), 0.5, 6)

        self.assertTrue(report.ok, [check.name for check in report.violations])

    @settings(max_examples=100, deadline=None)
    @given(panel_rows, st.integers(min_value=1, max_value=8))
    def test_random_piecewise_hamiltonians_satisfy_every_bound(self, rows, N):
        H, end = build_panels(rows)
        report = verify_coefficient_bounds(H, end + 0.5, N)

        self.assertTrue(report.ok, [check.name for check in report.violations])
        self.assertIn("parts_identity_forms", report.names())
