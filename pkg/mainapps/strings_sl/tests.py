from dataclasses import dataclass
import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import assume, given, settings, strategies as st

from core.errors import DomainError, NotMonotone
from mainapps.hamiltonians.corpus import alternating_rank_one, identity, tilted_rank_one
from mainapps.hamiltonians.hamiltonian import Interval, Panel, PiecewiseConstantHamiltonian, PowerPrimitiveHamiltonian, eval_H
from mainapps.hamiltonians.transforms import reparameterize
from mainapps.spectral.regvar import RegVarFunction

from .monotone import (
    InfiniteTail,
    MonotoneFunction,
    PiecewiseLinear,
    PiecewisePower,
    compose_affine,
    doubling_ratio_bounds,
    gen_inverse,
)
from .strings import (
    KreinString,
    hamiltonian_from_string,
    kac_string_criterion,
    kasahara_estimate,
    natural_hamiltonian,
    q_string,
    string_from_hamiltonian,
    string_sandwich,
)
from .sturm_liouville import SLProblem, dirichlet_m_function, free_m_function, sl_constants, sl_envelope


KAPPA = 0.1


def jump_string() -> KreinString:
    """m(x) = x on [0, 1], a unit jump at 1, then slope 1."""
    return KreinString.linear([0.0, 1.0], [0.0, 2.0], [0.0, 1.0], tail_slope=1.0, name="jump")


KASAHARA_STRINGS = (
    KreinString.power([(1.0, 1.0)], name="linear"),
    KreinString.power([(1.0, 2.0)], name="quadratic"),
    KreinString.power([(1.0, 0.5)], name="square_root"),
    jump_string(),
    KreinString.linear([0.0], [0.0], tail_slope=1.0, length=2.0, name="finite"),
)

GRID_STEP = 1.0 / 64.0
QUERY_POINTS = 128
DELTA = 1e-7
TOL = 1e-9
# rises of at least 1 over gaps of at most 3, tail slopes of at least 1/2
MAX_INVERSE_SLOPE = 3.0


@dataclass(frozen=True)
class StepData:
    """Integer knots and levels of a left-continuous step-and-ramp function."""

    knots: tuple[float, ...]
    values: tuple[float, ...]
    left_limits: tuple[float, ...]
    tail_slope: float
    length: float

    @property
    def has_tail(self) -> bool:
        return math.isfinite(self.length)

    def build(self, shift: float = 0.0) -> MonotoneFunction:
        values = [v + shift for v in self.values]
        left = [v + shift for v in self.left_limits]
        if not self.has_tail:
            return PiecewiseLinear(self.knots, values, left, tail_slope=self.tail_slope)
        return InfiniteTail(PiecewiseLinear(self.knots, values, left, tail_slope=self.tail_slope, x1=self.length), self.length)

    def restricted(self) -> MonotoneFunction:
        if self.has_tail:
            return self.build().base  # type: ignore[attr-defined]
        return PiecewiseLinear(self.knots, self.values, self.left_limits, tail_slope=self.tail_slope, x1=self.knots[-1] + 1.0)

    def jump_points(self) -> list[float]:
        points = [x for x, left, right in zip(self.knots, self.left_limits, self.values) if right > left]
        if self.has_tail:
            points.append(self.length)
        return points

    def string(self) -> KreinString:
        return KreinString.linear(self.knots, self.values, self.left_limits, tail_slope=self.tail_slope, length=self.length)


@st.composite
def step_data(draw, strict: bool = False) -> StepData:
    n = draw(st.integers(min_value=1, max_value=6))
    gaps = draw(st.lists(st.integers(min_value=1, max_value=3), min_size=n - 1, max_size=n - 1))
    jumps = draw(st.lists(st.sampled_from((0, 0, 1, 2)), min_size=n, max_size=n))
    rise_choices = (1, 2, 3) if strict else (0, 1, 2, 3)
    rises = draw(st.lists(st.sampled_from(rise_choices), min_size=n - 1, max_size=n - 1))
    tail_slope = draw(st.sampled_from((0.5, 1.0) if strict else (0.0, 0.5, 1.0)))
    extra = None if strict else draw(st.sampled_from((None, 1, 2, 3)))

    knots, left, values = [0.0], [0.0], []
    for gap in gaps:
        knots.append(knots[-1] + gap)
    for k in range(n):
        values.append(left[k] + jumps[k])
        if k + 1 < n:
            left.append(values[k] + rises[k])
    length = math.inf if extra is None else knots[-1] + extra
    return StepData(tuple(knots), tuple(values), tuple(left), tail_slope, length)


@st.composite
def trace_exact_strings(draw) -> KreinString:
    """Piecewise strings whose slopes keep 1 + slope a power of two."""
    n = draw(st.integers(min_value=1, max_value=5))
    gaps = draw(st.lists(st.integers(min_value=1, max_value=3), min_size=n - 1, max_size=n - 1))
    jumps = draw(st.lists(st.sampled_from((0, 0, 1, 2)), min_size=n, max_size=n))
    slopes = draw(st.lists(st.sampled_from((0.0, 1.0, 3.0)), min_size=n - 1, max_size=n - 1))
    tail_slope = draw(st.sampled_from((0.0, 1.0, 3.0)))
    extra = draw(st.sampled_from((None, 1, 2)))

    knots, left, values = [0.0], [0.0], []
    for gap in gaps:
        knots.append(knots[-1] + gap)
    for k in range(n):
        values.append(left[k] + jumps[k])
        if k + 1 < n:
            left.append(values[k] + slopes[k] * gaps[k])
    length = math.inf if extra is None else knots[-1] + extra
    return KreinString.linear(knots, values, left, tail_slope=tail_slope, length=length)


def query_levels(data: StepData, f: MonotoneFunction) -> np.ndarray:
    """Dyadic levels from f(0) up past the last knot or the tail."""
    if data.has_tail:
        top = f.base.end_limit() + 1.0  # type: ignore[attr-defined]
    else:
        top = f(data.knots[-1] + 2.0)
    return top * np.arange(QUERY_POINTS + 1) / QUERY_POINTS


def sampled(data: StepData, f: MonotoneFunction) -> tuple[np.ndarray, np.ndarray]:
    end = data.knots[-1] + 4.0
    xs = np.arange(int(end / GRID_STEP) + 1) * GRID_STEP
    return xs, np.array([f(x) for x in xs])


class GeneralisedInverseTests(SimpleTestCase):
    def test_jump_maps_to_its_location(self):
        f = PiecewiseLinear([0.0, 1.0, 2.0], [0.0, 3.0, 4.0], [0.0, 1.0, 4.0], tail_slope=1.0)
        inverse = gen_inverse(f)

        self.assertEqual(inverse(0.5), 0.5)
        self.assertEqual(inverse(2.0), 1.0)
        self.assertEqual(inverse(3.0), 1.0)
        self.assertEqual(inverse(3.5), 1.5)
        self.assertEqual(inverse(5.0), 3.0)

    def test_value_outside_the_hull_is_rejected(self):
        f = PiecewiseLinear([0.0, 1.0], [0.0, 1.0])

        with self.assertRaises(DomainError):
            f.inverse(2.0)

    def test_decreasing_data_is_rejected(self):
        with self.assertRaises(NotMonotone):
            PiecewiseLinear([0.0, 1.0], [1.0, 0.5])

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(min_value=0.1, max_value=10.0),
        st.floats(min_value=0.5, max_value=1.0),
        st.floats(min_value=0.1, max_value=10.0),
        st.floats(min_value=2.0, max_value=3.0),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_inverse_is_the_smallest_preimage(self, c1, rho1, c2, rho2, y):
        f = PiecewisePower([(c1, rho1), (c2, rho2)])
        x = f.inverse(y)

        self.assertGreaterEqual(f(x), y)
        self.assertLess(f(x * (1.0 - 1e-9)), y)

    def test_affine_composition(self):
        g = compose_affine(PiecewisePower([(1.0, 2.0)]), 2.0, 0.0, 3.0, 1.0)

        self.assertEqual(g(1.0), 13.0)

    def test_doubling_ratios_stay_below_the_power_bound(self):
        f = PiecewisePower([(1.0, 2.0), (1.0, 3.0)])
        report = doubling_ratio_bounds(f, 4.0, [1e-2, 1.0, 1e2], 2.0)

        self.assertEqual(report.bound, 2.0)
        self.assertTrue(report.ok, report.ratios)

    def test_doubling_factor_must_exceed_one(self):
        with self.assertRaises(DomainError):
            doubling_ratio_bounds(PiecewisePower([(1.0, 2.0)]), 1.0, [1.0], 2.0)

    def test_flat_end_on_a_finite_domain_is_attained(self):
        f = PiecewiseLinear([0.0, 1.0], [0.0, 2.0], [0.0, 2.0], x1=3.0)

        self.assertEqual(f.hull(), (0.0, 2.0, True))
        self.assertEqual(f.inverse(2.0), 1.0)
        self.assertEqual(InfiniteTail(f, 3.0).inverse(2.0), 1.0)
        self.assertEqual(InfiniteTail(f, 3.0).inverse(2.5), 3.0)


class InverseLawTests(SimpleTestCase):
    """Laws of the generalised inverse on random plateau, jump and tail mixes."""

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_matches_the_grid_infimum(self, data):
        f = data.build()
        xs, fx = sampled(data, f)
        for y in query_levels(data, f):
            with self.subTest(y=y):
                hits = fx >= y
                self.assertTrue(hits.any())
                grid_inf = xs[np.argmax(hits)]
                x = f.inverse(y)

                self.assertLessEqual(x, grid_inf + TOL)
                self.assertLessEqual(grid_inf, x + GRID_STEP + TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_values_stay_in_the_domain(self, data):
        f = data.build()
        for y in query_levels(data, f):
            x = f.inverse(y)

            self.assertGreaterEqual(x, f.x0)
            self.assertLess(x, f.x1)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_non_decreasing_and_left_continuous(self, data):
        f = data.build()
        levels = query_levels(data, f)
        inverses = [f.inverse(y) for y in levels]

        self.assertTrue(all(b >= a - TOL for a, b in zip(inverses, inverses[1:])))
        for y, x in zip(levels, inverses):
            if y - DELTA < levels[0]:
                continue
            with self.subTest(y=y):
                gap = x - f.inverse(y - DELTA)

                self.assertGreaterEqual(gap, -TOL)
                self.assertLessEqual(gap, MAX_INVERSE_SLOPE * DELTA + TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_inverse_of_a_value_is_the_start_of_its_level_set(self, data):
        f = data.build()
        xs, _ = sampled(data, f)

        self.assertEqual(f.inverse(f(f.x0)), f.x0)
        for x in xs[::8]:
            with self.subTest(x=x):
                y = f(x)
                start = f.inverse(y)

                self.assertLessEqual(start, x + TOL)
                if start < x - TOL:
                    self.assertEqual(f(0.5 * (start + x)), y)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_value_at_the_inverse(self, data):
        f = data.build()
        jumps = data.jump_points()
        for y in query_levels(data, f):
            with self.subTest(y=y):
                x = f.inverse(y)

                self.assertLessEqual(f(x), y + TOL)
                if all(abs(x - point) > TOL for point in jumps):
                    self.assertGreaterEqual(f(x), y - TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data(strict=True))
    def test_strictly_increasing_function_has_a_continuous_inverse(self, data):
        f = data.build()
        for y in query_levels(data, f):
            with self.subTest(y=y):
                gap = f.inverse(y + DELTA) - f.inverse(y)

                self.assertGreaterEqual(gap, -TOL)
                self.assertLessEqual(gap, MAX_INVERSE_SLOPE * DELTA + TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_limit_at_the_end_of_the_range(self, data):
        f = data.build()
        if data.has_tail:
            self.assertEqual(f.inverse(1e12), data.length)
            return
        if data.tail_slope > 0.0:
            self.assertGreater(f.inverse(1e9), 1e8)
            return
        end = f.end_limit()
        assume(end > f(f.x0))
        xs, fx = sampled(data, f)
        last_below = xs[fx < end].max()

        self.assertLessEqual(abs(f.inverse(end - DELTA) - last_below), GRID_STEP + MAX_INVERSE_SLOPE * DELTA + TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_larger_function_has_the_smaller_inverse(self, data):
        f, g = data.build(), data.build(shift=1.0)
        for y in query_levels(data, f):
            if y < 1.0:
                continue
            with self.subTest(y=y):
                self.assertLessEqual(g.inverse(y), f.inverse(y) + TOL)

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_affine_composition_law(self, data):
        f = data.build()
        composed = compose_affine(f, 0.5, 0.0, 2.0, 1.0)
        end = f.end_limit()
        for y in query_levels(data, f)[::16]:
            if y >= end:
                continue
            with self.subTest(y=y):
                expected = 2.0 * f.inverse(y)

                self.assertAlmostEqual(composed.inverse(2.0 * y + 1.0), expected, delta=TOL * (1.0 + expected))

    @settings(max_examples=200, deadline=None)
    @given(step_data())
    def test_extension_keeps_the_inverse(self, data):
        f, restricted = data.build(), data.restricted()
        lower, upper, included = restricted.hull()
        for y in query_levels(data, f):
            if y < lower or y > upper or (y == upper and not included):
                continue
            with self.subTest(y=y):
                self.assertEqual(f.inverse(y), restricted.inverse(y))

    @settings(max_examples=200, deadline=None)
    @given(step_data(), st.sampled_from((2.0, 10.0)))
    def test_doubling_ratios_of_x_times_mass(self, data, c):
        assume(data.has_tail or data.tail_slope > 0.0 or data.values[-1] > 0.0)
        f = data.string().f()
        report = doubling_ratio_bounds(f, c, [1e-2, 1.0, 1e2], 1.0)

        self.assertEqual(len(report.ratios), 3)
        self.assertTrue(report.ok, report.ratios)


class KreinStringTests(SimpleTestCase):
    def test_mass_must_vanish_at_zero(self):
        with self.assertRaises(DomainError):
            KreinString.linear([0.0], [1.0])

    def test_piecewise_string_round_trips_through_its_hamiltonian(self):
        S = jump_string()
        back = string_from_hamiltonian(natural_hamiltonian(S))

        self.assertEqual(back.length, math.inf)
        for x in (0.5, 1.0, 1.5, 3.0):
            with self.subTest(x=x):
                self.assertAlmostEqual(back.mass(x), S.mass(x), places=12)

    @settings(max_examples=20, deadline=None)
    @given(trace_exact_strings())
    def test_random_strings_round_trip_through_the_trace_normed_hamiltonian(self, S):
        back = string_from_hamiltonian(hamiltonian_from_string(S))
        knots = S.mass.knots
        points = list(knots) + [0.5 * (a + b) for a, b in zip(knots, knots[1:])] + [knots[-1] + 0.5]

        self.assertEqual(back.length, S.length)
        for x in points:
            if x >= S.length:
                continue
            with self.subTest(x=x):
                self.assertAlmostEqual(back.mass(x), S.mass(x), places=12)

    def test_mass_at_the_origin_of_a_leading_vertical_interval(self):
        H = PiecewiseConstantHamiltonian([Panel(0.0, 1.0, 0.0, 1.0, 0.0), Panel(1.0, math.inf, 1.0, 1.0, 0.0)])
        S = string_from_hamiltonian(H)

        self.assertEqual(S.length, math.inf)
        self.assertEqual(S.mass(0.0), 0.0)
        for x in (0.5, 1.0, 3.0):
            with self.subTest(x=x):
                self.assertAlmostEqual(S.mass(x), 1.0 + x, places=12)
        self.assertFalse(S.regular)

    def test_trailing_vertical_interval_makes_the_string_regular(self):
        H = PiecewiseConstantHamiltonian([Panel(0.0, 1.0, 1.0, 1.0, 0.0), Panel(1.0, math.inf, 0.0, 1.0, 0.0)])
        S = string_from_hamiltonian(H)

        self.assertEqual(S.length, 1.0)
        self.assertEqual(S.total_mass, 1.0)
        self.assertTrue(S.regular)
        self.assertFalse(string_from_hamiltonian(identity()).regular)

    def test_alternating_rank_one_string_has_unit_density(self):
        S = string_from_hamiltonian(alternating_rank_one(math.pi / 4))

        self.assertEqual(S.length, math.inf)
        for x in (0.5, 1.0, 4.0):
            with self.subTest(x=x):
                self.assertAlmostEqual(S.mass(x), x, places=9)

    def test_string_survives_a_change_of_parameter(self):
        S = string_from_hamiltonian(tilted_rank_one())
        moved = string_from_hamiltonian(reparameterize(tilted_rank_one(), lambda u: u * u, lambda u: 2.0 * u, Interval(0.0)))

        self.assertEqual(moved.length, S.length)
        for x in (0.1, 1.0, 5.0):
            with self.subTest(x=x):
                self.assertAlmostEqual(moved.mass(x), S.mass(x), delta=1e-9 * max(1.0, S.mass(x)))

    def test_string_ignores_the_off_diagonal(self):
        tilted = string_from_hamiltonian(tilted_rank_one())
        diagonal_part = string_from_hamiltonian(PowerPrimitiveHamiltonian([(4.0, 1.0), (1.0, 2.0)], [(1.0, 1.0), (1.0, 2.0)]))
        panels = string_from_hamiltonian(
            PiecewiseConstantHamiltonian([Panel(0.0, 1.0, 1.0, 1.0, 0.5), Panel(1.0, math.inf, 2.0, 1.0, 1.0)])
        )
        panels_diagonal = string_from_hamiltonian(
            PiecewiseConstantHamiltonian([Panel(0.0, 1.0, 1.0, 1.0, 0.0), Panel(1.0, math.inf, 2.0, 1.0, 0.0)])
        )

        for x in (0.1, 1.0, 5.0):
            with self.subTest(x=x):
                self.assertEqual(tilted.mass(x), diagonal_part.mass(x))
                self.assertEqual(panels.mass(x), panels_diagonal.mass(x))

    def test_trace_normed_hamiltonian_of_the_jump_string(self):
        H = hamiltonian_from_string(jump_string())

        for t in (1.0, 2.5, 4.0):
            with self.subTest(t=t):
                self.assertAlmostEqual(float(np.trace(eval_H(H, t))), 1.0, places=12)
        self.assertEqual(eval_H(H, 2.5)[0, 0], 0.0)
        self.assertAlmostEqual(eval_H(H, 1.0)[0, 0], 0.5, places=12)

    def test_trace_normed_hamiltonian_of_a_power_string(self):
        H = hamiltonian_from_string(KreinString.power([(1.0, 2.0)]))

        for u in (0.5, 2.0):
            with self.subTest(u=u):
                self.assertAlmostEqual(float(np.trace(eval_H(H, u))), 1.0, places=9)

    def test_unit_density_string_has_q_equal_to_inverse_square_root(self):
        S = KreinString.power([(1.0, 1.0)])
        for y in (1.0, 1e2, 1e4):
            with self.subTest(y=y):
                value = q_string(S, -y, 1e-10).value

                self.assertLess(abs(value.real * math.sqrt(y) - 1.0), 1e-6)

    def test_q_is_positive_on_the_negative_axis(self):
        for S in (KreinString.power([(1.0, 1.0)]), KreinString.power([(1.0, 2.0)]), jump_string()):
            for y in (1.0, 1e2):
                with self.subTest(string=S.name, y=y):
                    result = q_string(S, -y, 1e-8)

                    self.assertEqual(result.value.imag, 0.0)
                    self.assertGreater(result.value.real, result.radius)

    def test_q_is_not_evaluated_on_the_positive_axis(self):
        with self.assertRaises(DomainError):
            q_string(KreinString.power([(1.0, 1.0)]), 4.0)

    def test_kasahara_ratio_stays_moderate(self):
        for S in KASAHARA_STRINGS:
            for y in (1.0, 1e2, 1e4):
                with self.subTest(string=S.name, y=y):
                    estimate = kasahara_estimate(S, y, q=0.2)

                    self.assertTrue(estimate.in_band)
                    self.assertGreater(estimate.ratio, 1.0 / 30.0)
                    self.assertLess(estimate.ratio, 30.0)

    def test_kac_verdict_flips_at_one_half(self):
        S = KreinString.power([(1.0, 1.0)])
        below = kac_string_criterion(S, RegVarFunction.power_function(0.4))
        above = kac_string_criterion(S, RegVarFunction.power_function(0.6))

        self.assertIs(below.convergent, True)
        self.assertIs(above.convergent, False)
        self.assertTrue(below.agree)
        self.assertTrue(above.agree)

    def test_sandwich_for_unit_density(self):
        c = 0.5
        report = string_sandwich(KreinString.power([(1.0, 1.0)]), lambda u: u**-0.25, c)

        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.lower, 2.0**0.75 * math.sqrt(c), delta=1e-6)
        self.assertAlmostEqual(report.middle, 2.0 * math.sqrt(c), delta=1e-6)
        self.assertAlmostEqual(report.upper, 2.0**1.25 * math.sqrt(c), delta=1e-6)


class SturmLiouvilleTests(SimpleTestCase):
    def test_constants_are_reciprocal(self):
        c1, c2 = sl_constants(KAPPA, math.pi)

        self.assertAlmostEqual(c1 * c2, 1.0, places=14)
        self.assertGreaterEqual(c2, 1.0)

    def test_angle_outside_the_circle_is_rejected(self):
        with self.assertRaises(DomainError):
            sl_constants(KAPPA, 2.0 * math.pi)

    def test_free_problem_m_function_is_i_sqrt_lambda(self):
        value = free_m_function(SLProblem.free(), -4.0, 1e-10)

        self.assertLess(abs(value + 2.0), 1e-8)

    def test_free_envelope(self):
        prob = SLProblem.free()
        for r in (1e-2, 1.0, 1e2, 1e4):
            for theta in (math.pi / 3, math.pi, 5 * math.pi / 3):
                with self.subTest(r=r, theta=theta):
                    envelope = sl_envelope(prob, r, theta, KAPPA)

                    self.assertAlmostEqual(envelope.B / math.sqrt(r), 1.0, places=6)
                    self.assertTrue(envelope.ok)

    def test_dirichlet_oracle_matches_the_free_route(self):
        lam = 1.0 + 2.0j
        prob = SLProblem.free()

        self.assertLess(abs(dirichlet_m_function(prob, lam) - free_m_function(prob, lam, 1e-10)), 1e-7)

    def test_bump_envelope_from_r0(self):
        prob = SLProblem.bump()
        r0 = sl_envelope(prob, 1.0, math.pi / 2, KAPPA, measure=False).r0
        for r in (r0, 10.0 * r0, 100.0 * r0):
            with self.subTest(r=r):
                envelope = sl_envelope(prob, r, math.pi / 2, KAPPA)

                self.assertTrue(envelope.in_range)
                self.assertTrue(envelope.ok, envelope.as_dict())

    def test_bump_neighbourhood(self):
        envelope = sl_envelope(SLProblem.bump(), 10.0, math.pi / 2, KAPPA)

        self.assertEqual(envelope.x0, 0.25)
        self.assertAlmostEqual(envelope.r0, 9.0 * KAPPA**2 / 0.0625, places=9)
        self.assertGreaterEqual(envelope.v_range[0], 1.0 - 1e-9)
