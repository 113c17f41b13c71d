import cmath
import math

from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.errors import DomainError, NoRankOneLimit, NotMonotone

from .corpus import FIXTURES, angle_sweep, diagonal, get_fixture, identity, split_prefix, tilted_rank_one
from .hamiltonian import (
    AlternatingRankOneHamiltonian,
    DyadicPattern,
    Interval,
    IntervalUnionPattern,
    Panel,
    PiecewiseConstantHamiltonian,
    PowerPrimitiveHamiltonian,
    check_invariants,
    eval_H,
    normalize_terms,
    vanishing_entry,
)
from .serializers import HamiltonianSpecSerializer
from .transforms import (
    IndivisiblePrefix,
    derive_rotation,
    detect_and_split_indivisible,
    invert_JHJ,
    reparameterize,
    rotate,
    rotation_mobius,
    trace_normalize,
)


SAMPLES = [10.0**k for k in range(-3, 4)] + [0.75, 1.5, 2.5, 3.5]

quarter = st.integers(min_value=0, max_value=12).map(lambda k: k / 4.0)
panel_rows = st.lists(
    st.tuples(
        st.integers(min_value=1, max_value=8).map(lambda k: k / 4.0),
        quarter,
        quarter,
        st.integers(min_value=-3, max_value=3).map(lambda k: k / 4.0),
    ),
    min_size=1,
    max_size=6,
)


def build_panels(rows):
    panels, start = [], 0.0
    for length, h1, h2, corr in rows:
        panels.append(Panel(start, start + length, h1, h2, corr * math.sqrt(h1 * h2)))
        start += length
    panels.append(Panel(start, math.inf, 1.0, 1.0, 0.0))
    return PiecewiseConstantHamiltonian(panels)


class PiecewiseConstantTests(SimpleTestCase):
    def test_identity_primitive_is_linear(self):
        H = identity()

        self.assertEqual(H.primitive().values(3.0), (3.0, 3.0, 0.0))
        self.assertTrue(H.limit_point)

    def test_gap_between_panels_is_rejected(self):
        with self.assertRaises(DomainError):
            PiecewiseConstantHamiltonian([Panel(0.0, 1.0, 1.0, 1.0, 0.0), Panel(2.0, 3.0, 1.0, 1.0, 0.0)])

    def test_indefinite_panel_is_rejected(self):
        with self.assertRaises(DomainError):
            PiecewiseConstantHamiltonian([Panel(0.0, math.inf, 1.0, 1.0, 2.0)])

    def test_entries_outside_the_interval_raise(self):
        with self.assertRaises(DomainError):
            identity().entries(-1.0)

    def test_breakpoints_are_panel_starts(self):
        H = split_prefix()

        self.assertEqual(H.breakpoints(0.0, 5.0), [1.0])
        self.assertEqual([p.h2 for p in H.panels(0.0, 2.0)], [0.0, 1.0])

    @settings(max_examples=100, deadline=None)
    @given(panel_rows)
    def test_random_panels_keep_primitive_invariants(self, rows):
        H = build_panels(rows)

        self.assertEqual(check_invariants(H, [0.1 * k for k in range(1, 120)]), [])


class PowerPrimitiveTests(SimpleTestCase):
    def test_equal_exponents_merge(self):
        self.assertEqual(normalize_terms([(1.0, 1.0), (2.0, 1.0), (0.0, 2.0)]), ((3.0, 1.0),))

    def test_non_positive_exponent_is_rejected(self):
        with self.assertRaises(DomainError):
            normalize_terms([(1.0, 0.0)])

    def test_indefinite_power_hamiltonian_is_rejected(self):
        with self.assertRaises(DomainError):
            PowerPrimitiveHamiltonian(m1=[(1.0, 1.0)], m2=[(1.0, 1.0)], m3=[(2.0, 1.0)])

    def test_entries_are_derivatives_of_the_primitive(self):
        H = tilted_rank_one(2.0)

        self.assertEqual(H.entries(1.0), (6.0, 3.0, 4.0))
        self.assertEqual(H.primitive().values(1.0), (5.0, 2.0, 3.0))


class AlternatingRankOneTests(SimpleTestCase):
    def test_dyadic_membership(self):
        pattern = DyadicPattern()

        self.assertTrue(pattern.contains(0.75))
        self.assertTrue(pattern.contains(1.0))
        self.assertFalse(pattern.contains(1.5))
        self.assertTrue(pattern.contains(3.0))

    def test_dyadic_minus_measure_on_unit_interval(self):
        self.assertAlmostEqual(DyadicPattern().minus_measure(1.0), 1.0 / 3.0, places=15)

    def test_finite_pattern_primitive(self):
        pattern = IntervalUnionPattern(((0.0, 0.5), (1.0, 2.0)))
        H = AlternatingRankOneHamiltonian(math.pi / 4, pattern)
        m1, m2, m3 = H.primitive().values(2.0)

        self.assertAlmostEqual(m1, 1.0, places=14)
        self.assertAlmostEqual(m2, 1.0, places=14)
        self.assertAlmostEqual(m3, 0.5, places=14)

    def test_angle_outside_range_is_rejected(self):
        with self.assertRaises(DomainError):
            AlternatingRankOneHamiltonian(0.0, DyadicPattern())


class CorpusTests(SimpleTestCase):
    def test_every_fixture_keeps_its_invariants(self):
        for name in FIXTURES:
            with self.subTest(fixture=name):
                self.assertEqual(check_invariants(get_fixture(name), SAMPLES), [])

    def test_unknown_fixture_raises_domain_error(self):
        with self.assertRaises(DomainError):
            get_fixture("missing")

    def test_angle_sweep_legs(self):
        for value, expected in zip(angle_sweep(6), [1.0, 0.5, 0.0, -0.5, -1.0, -2.0 / 3.0]):
            self.assertAlmostEqual(value, expected, places=14)


class TransformTests(SimpleTestCase):
    def test_reparameterized_identity(self):
        H = reparameterize(identity(), lambda u: u * u, lambda u: 2.0 * u, Interval(0.0))

        self.assertAlmostEqual(eval_H(H, 2.0)[0, 0], 4.0, places=12)
        self.assertAlmostEqual(eval_H(H, 2.0)[0, 1], 0.0, places=12)
        self.assertAlmostEqual(H.primitive().values(2.0)[0], 4.0, places=12)

    def test_reparameterization_must_start_at_the_left_endpoint(self):
        with self.assertRaises(NotMonotone):
            reparameterize(identity(), lambda u: 1.0 + u, lambda u: 1.0, Interval(0.0))

    def test_invert_swaps_the_diagonal(self):
        H = invert_JHJ(diagonal(4.0, 1.0))
        m1, m2, m3 = H.primitive().values(1.0)

        self.assertAlmostEqual(m1, 1.0, places=14)
        self.assertAlmostEqual(m2, 4.0, places=14)
        self.assertAlmostEqual(m3, 0.0, places=14)

    def test_rotation_by_half_pi_is_the_identity(self):
        H = diagonal()

        self.assertIs(rotate(H, math.pi / 2), H)
        self.assertTrue(cmath.isclose(rotation_mobius(math.pi / 2, 2.0 + 1.0j), 2.0 + 1.0j, rel_tol=1e-14))

    def test_rotation_by_zero_inverts_the_coefficient(self):
        value = 0.3 + 2.0j

        self.assertTrue(cmath.isclose(rotation_mobius(0.0, value), -1.0 / value, rel_tol=1e-15))

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(min_value=0.05, max_value=1.5),
        st.floats(min_value=-5.0, max_value=5.0),
        st.floats(min_value=0.1, max_value=5.0),
    )
    def test_congruence_transform_round_trips(self, phi, re, im):
        rotated = rotate(identity(), phi)
        value = complex(re, im)

        back = rotated.weyl_inverse_transform(rotated.weyl_transform(value))

        self.assertTrue(cmath.isclose(back, value, rel_tol=1e-9, abs_tol=1e-9))

    def test_tilted_fixture_has_a_rank_one_limit(self):
        limit = derive_rotation(tilted_rank_one())

        self.assertAlmostEqual(limit.c1, 0.8, places=12)
        self.assertAlmostEqual(limit.c2, 0.2, places=12)
        self.assertAlmostEqual(limit.c3, 0.4, places=12)

    def test_diagonal_start_has_no_rank_one_limit(self):
        with self.assertRaises(NoRankOneLimit):
            derive_rotation(PowerPrimitiveHamiltonian(m1=[(1.0, 1.0)], m2=[(1.0, 1.0)]))

    def test_trace_normalization(self):
        H = trace_normalize(diagonal(4.0, 1.0))
        m1, m2, m3 = H.primitive().values(5.0)

        self.assertAlmostEqual(m1, 4.0, places=10)
        self.assertAlmostEqual(m2, 1.0, places=10)
        self.assertAlmostEqual(m3, 0.0, places=10)

    def test_split_prefix_is_peeled_and_recomposed(self):
        H = split_prefix()
        split = detect_and_split_indivisible(H)
        z = 2.0 + 3.0j

        self.assertEqual(vanishing_entry(H), "h2")
        self.assertEqual(split.prefix.kind, IndivisiblePrefix.TYPE_ZERO)
        self.assertAlmostEqual(split.prefix.endpoint, 1.0, places=12)
        self.assertAlmostEqual(split.prefix.weight, 1.0, places=12)
        self.assertTrue(cmath.isclose(split.compose(z, 1.0j), z + 1.0j, rel_tol=1e-12))
        self.assertTrue(cmath.isclose(split.peel(z, z + 1.0j), 1.0j, rel_tol=1e-12))


class HamiltonianSpecSerializerTests(SimpleTestCase):
    def test_corpus_spec_builds_the_fixture(self):
        serializer = HamiltonianSpecSerializer(data={"kind": "corpus", "name": "identity"})

        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["hamiltonian"].name, "identity")

    def test_piecewise_spec_accepts_infinite_endpoints(self):
        serializer = HamiltonianSpecSerializer(
            data={"kind": "piecewise", "panels": [[0, 1, 1, 0, 0], [1, math.inf, 1, 1, 0]]}
        )

        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["hamiltonian"].b, math.inf)

    def test_unknown_key_is_rejected(self):
        serializer = HamiltonianSpecSerializer(data={"kind": "corpus", "name": "identity", "colour": "red"})

        self.assertFalse(serializer.is_valid())
        self.assertIn("colour", serializer.errors)

    def test_powers_need_both_diagonal_entries(self):
        serializer = HamiltonianSpecSerializer(data={"kind": "powers", "m1": [[1.0, 1.0]]})

        self.assertFalse(serializer.is_valid())
        self.assertIn("m2", serializer.errors)

    def test_unknown_fixture_is_reported_on_name(self):
        serializer = HamiltonianSpecSerializer(data={"kind": "corpus", "name": "missing"})

        self.assertFalse(serializer.is_valid())
        self.assertIn("name", serializer.errors)

    def test_indefinite_powers_are_reported_on_kind(self):
        serializer = HamiltonianSpecSerializer(
            data={"kind": "powers", "m1": [[1.0, 1.0]], "m2": [[1.0, 1.0]], "m3": [[2.0, 1.0]]}
        )

        self.assertFalse(serializer.is_valid())
        self.assertIn("kind", serializer.errors)
