from __future__ import annotations

from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass, field
import logging
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from core.errors import DomainError, QuadratureError


logger = logging.getLogger(__name__)


J = np.array([[0.0, -1.0], [1.0, 0.0]])

PSD_TOLERANCE = 1e-10
PRIMITIVE_RELATIVE_TOLERANCE = 1e-10
VANISHING_RATIO = 1e-12

Entries = tuple[float, float, float]
PowerTerms = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Interval:
    a: float
    b: float = math.inf

    def __post_init__(self) -> None:
        if not math.isfinite(self.a):
            raise DomainError("The left endpoint must be finite.")
        if not self.a < self.b:
            raise DomainError(f"Empty interval [{self.a}, {self.b}).")

    def contains(self, t: float) -> bool:
        return self.a <= t < self.b

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Panel:
    start: float
    end: float
    h1: float
    h2: float
    h3: float

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.h1, self.h3], [self.h3, self.h2]])

    @property
    def det(self) -> float:
        return self.h1 * self.h2 - self.h3 * self.h3


@dataclass(frozen=True)
class PrimitiveM:
    """M(t) = integral of H from a to t, as three scalar evaluators."""

    values: Callable[[float], Entries]
    exact: bool = True
    error_bound: float = 0.0

    def m1(self, t: float) -> float:
        return self.values(t)[0]

    def m2(self, t: float) -> float:
        return self.values(t)[1]

    def m3(self, t: float) -> float:
        return self.values(t)[2]

    def matrix(self, t: float) -> np.ndarray:
        m1, m2, m3 = self.values(t)
        return np.array([[m1, m3], [m3, m2]])

    def det(self, t: float) -> float:
        m1, m2, m3 = self.values(t)
        return m1 * m2 - m3 * m3

    def trace(self, t: float) -> float:
        m1, m2, _ = self.values(t)
        return m1 + m2


def is_psd(h1: float, h2: float, h3: float) -> bool:
    return h1 >= -PSD_TOLERANCE and h2 >= -PSD_TOLERANCE and h1 * h2 - h3 * h3 >= -PSD_TOLERANCE * (1.0 + abs(h1 * h2))


class Hamiltonian(ABC):
    """A positive semidefinite 2x2 coefficient field H(t) on [a, b).

    Subclasses provide pointwise entries and the primitive. Piecewise-constant
    variants (``piecewise = True``) also expose their breakpoints so that the
    solver can use exact per-panel propagators.
    """

    interval: Interval
    limit_point: bool = True
    piecewise: bool = False
    primitive_exact: bool = True
    name: str = ""

    @property
    def a(self) -> float:
        return self.interval.a

    @property
    def b(self) -> float:
        return self.interval.b

    @abstractmethod
    def _entries(self, t: float) -> Entries:
        ...

    @abstractmethod
    def _primitive_entries(self, t: float) -> Entries:
        ...

    def entries(self, t: float) -> Entries:
        if not self.interval.contains(t):
            raise DomainError(f"t={t} lies outside [{self.a}, {self.b}).")
        return self._entries(t)

    def matrix(self, t: float) -> np.ndarray:
        h1, h2, h3 = self.entries(t)
        return np.array([[h1, h3], [h3, h2]])

    def primitive(self) -> PrimitiveM:
        return PrimitiveM(values=self._primitive_checked, exact=self.primitive_exact)

    def _primitive_checked(self, t: float) -> Entries:
        if t < self.a or t > self.b:
            raise DomainError(f"t={t} lies outside [{self.a}, {self.b}].")
        if t == self.a:
            return (0.0, 0.0, 0.0)
        return self._primitive_entries(t)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        """Points in (lo, hi) where the entries may jump."""
        return []

    def rank_one_tail(self) -> float | None:
        """Start of a final infinite stretch on which H is one constant rank-one matrix."""
        return None

    def panels(self, lo: float, hi: float) -> list[Panel]:
        if not self.piecewise:
            raise DomainError(f"{type(self).__name__} has no panel decomposition.")
        points = [lo, *self.breakpoints(lo, hi), hi]
        result: list[Panel] = []
        for start, end in zip(points[:-1], points[1:]):
            if end <= start:
                continue
            h1, h2, h3 = self._entries(0.5 * (start + end))
            result.append(Panel(start, end, h1, h2, h3))
        return result

    def power_terms(self) -> tuple[PowerTerms, PowerTerms, PowerTerms] | None:
        """Return m_i(t) = sum c * (t - a)**rho when the primitive is a finite power sum."""
        return None

    def describe(self) -> dict:
        return {
            "kind": type(self).__name__,
            "name": self.name,
            "a": self.a,
            "b": self.b,
            "limit_point": self.limit_point,
        }


class PiecewiseConstantHamiltonian(Hamiltonian):
    piecewise = True

    def __init__(self, panels: Sequence[Panel], *, name: str = "", limit_point: bool | None = None):
        if not panels:
            raise DomainError("A piecewise constant Hamiltonian needs at least one panel.")
        ordered = tuple(panels)
        for left, right in zip(ordered[:-1], ordered[1:]):
            if left.end != right.start:
                raise DomainError(f"Panels must be contiguous: {left.end} != {right.start}.")
        for panel in ordered:
            if not panel.start < panel.end:
                raise DomainError(f"Empty panel [{panel.start}, {panel.end}).")
            if not is_psd(panel.h1, panel.h2, panel.h3):
                raise DomainError(f"Panel starting at {panel.start} is not positive semidefinite.")
        self._panels = ordered
        self._starts = [panel.start for panel in ordered]
        self.interval = Interval(ordered[0].start, ordered[-1].end)
        self.name = name

        cumulative = [(0.0, 0.0, 0.0)]
        for panel in ordered[:-1]:
            m1, m2, m3 = cumulative[-1]
            cumulative.append(
                (m1 + panel.h1 * panel.length, m2 + panel.h2 * panel.length, m3 + panel.h3 * panel.length)
            )
        self._cumulative = cumulative

        if limit_point is None:
            last = ordered[-1]
            limit_point = math.isinf(last.end) and last.h1 + last.h2 > 0
        self.limit_point = limit_point

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]], **kwargs) -> "PiecewiseConstantHamiltonian":
        return cls([Panel(*(float(value) for value in row)) for row in rows], **kwargs)

    @property
    def constant_panels(self) -> tuple[Panel, ...]:
        return self._panels

    def _index(self, t: float) -> int:
        return max(0, bisect_right(self._starts, t) - 1)

    def _entries(self, t: float) -> Entries:
        panel = self._panels[self._index(t)]
        return (panel.h1, panel.h2, panel.h3)

    def _primitive_entries(self, t: float) -> Entries:
        index = self._index(t)
        panel = self._panels[index]
        m1, m2, m3 = self._cumulative[index]
        u = t - panel.start
        return (m1 + panel.h1 * u, m2 + panel.h2 * u, m3 + panel.h3 * u)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return [start for start in self._starts[1:] if lo < start < hi]

    def rank_one_tail(self) -> float | None:
        last = self._panels[-1]
        if math.isinf(last.end) and last.h1 + last.h2 > 0 and last.det <= 1e-15 * (last.h1 + last.h2) ** 2:
            return last.start
        return None


def _power_value(terms: PowerTerms, u: float) -> float:
    return sum(coefficient * u**exponent for coefficient, exponent in terms)


def _power_derivative(terms: PowerTerms, u: float) -> float:
    total = 0.0
    for coefficient, exponent in terms:
        if exponent == 1.0:
            total += coefficient
        elif u > 0.0:
            total += coefficient * exponent * u ** (exponent - 1.0)
        else:
            total += math.inf if exponent < 1.0 and coefficient > 0 else 0.0
    return total


def normalize_terms(terms: Iterable[Sequence[float]]) -> PowerTerms:
    """Merge equal exponents and drop zero coefficients."""
    merged: dict[float, float] = {}
    for coefficient, exponent in terms:
        exponent = float(exponent)
        if exponent <= 0.0:
            raise DomainError(f"Power exponents must be positive, got {exponent}.")
        key = round(exponent, 12)
        merged[key] = merged.get(key, 0.0) + float(coefficient)
    return tuple(
        (coefficient, exponent)
        for exponent, coefficient in sorted(merged.items())
        if abs(coefficient) > 1e-15
    )


class PowerPrimitiveHamiltonian(Hamiltonian):
    """Hamiltonian whose primitive entries are finite sums c * (t - a)**rho."""

    def __init__(
        self,
        m1: Iterable[Sequence[float]],
        m2: Iterable[Sequence[float]],
        m3: Iterable[Sequence[float]] = (),
        *,
        start: float = 0.0,
        end: float = math.inf,
        name: str = "",
    ):
        self._terms = (normalize_terms(m1), normalize_terms(m2), normalize_terms(m3))
        self.interval = Interval(start, end)
        self.name = name
        self.limit_point = math.isinf(end) and bool(self._terms[0] or self._terms[1])
        for probe in np.geomspace(1e-6, 1e3, 19):
            t = start + probe
            if t >= end:
                break
            h1, h2, h3 = self._entries(t)
            if not is_psd(h1, h2, h3):
                raise DomainError(f"Power primitive gives an indefinite H at t={t}.")

    def _entries(self, t: float) -> Entries:
        u = t - self.a
        return tuple(_power_derivative(terms, u) for terms in self._terms)  # type: ignore[return-value]

    def _primitive_entries(self, t: float) -> Entries:
        u = t - self.a
        return tuple(_power_value(terms, u) for terms in self._terms)  # type: ignore[return-value]

    def power_terms(self) -> tuple[PowerTerms, PowerTerms, PowerTerms]:
        return self._terms

    def describe(self) -> dict:
        description = super().describe()
        description["m1"], description["m2"], description["m3"] = (list(map(list, terms)) for terms in self._terms)
        return description


class CallableHamiltonian(Hamiltonian):
    """Entries given by evaluators; the primitive is computed by adaptive quadrature."""

    primitive_exact = False

    def __init__(
        self,
        interval: Interval,
        h1: Callable[[float], float],
        h2: Callable[[float], float],
        h3: Callable[[float], float] | None = None,
        *,
        limit_point: bool | None = None,
        jumps: Sequence[float] = (),
        name: str = "",
    ):
        self.interval = interval
        self._h = (h1, h2, h3 or (lambda t: 0.0))
        self._jumps = tuple(sorted(jumps))
        self.name = name
        if limit_point is None:
            limit_point = self._probe_limit_point()
        self.limit_point = limit_point

    def _entries(self, t: float) -> Entries:
        return (float(self._h[0](t)), float(self._h[1](t)), float(self._h[2](t)))

    def _integrate(self, evaluator: Callable[[float], float], t: float) -> tuple[float, float]:
        points = [p for p in self._jumps if self.a < p < t] or None
        value, error = integrate.quad(
            evaluator, self.a, t, points=points, limit=400, epsabs=0.0, epsrel=1e-12
        )
        return value, error

    def _primitive_entries(self, t: float) -> Entries:
        values = []
        for evaluator in self._h:
            value, error = self._integrate(evaluator, t)
            if error > PRIMITIVE_RELATIVE_TOLERANCE * max(abs(value), 1e-300) and error > 1e-14:
                raise QuadratureError(
                    message=f"Primitive quadrature at t={t} reached error {error:.2e} for value {value:.6e}.",
                    payload={"t": t, "value": value, "error": error},
                )
            values.append(value)
        return tuple(values)  # type: ignore[return-value]

    def primitive(self) -> PrimitiveM:
        return PrimitiveM(values=self._primitive_checked, exact=False, error_bound=PRIMITIVE_RELATIVE_TOLERANCE)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return [p for p in self._jumps if lo < p < hi]

    def _probe_limit_point(self) -> bool:
        if math.isfinite(self.b):
            return False
        traces = []
        for offset in (1e1, 1e3, 1e5):
            m1, m2, _ = self._primitive_entries(self.a + offset)
            traces.append(m1 + m2)
        return traces[-1] > 10.0 * traces[0] > 0.0


class DiagonalHamiltonian(CallableHamiltonian):
    """diag(w, 1/p), the canonical system of -(p y')' = lambda w y."""

    def __init__(
        self,
        interval: Interval,
        weight: Callable[[float], float],
        inverse_p: Callable[[float], float],
        **kwargs,
    ):
        super().__init__(interval, weight, inverse_p, None, **kwargs)


class DyadicPattern:
    """I+ = union over integers n of (2**(2n-1), 2**(2n)]."""

    def contains(self, t: float) -> bool:
        return self._exponent(t) % 2 == 0

    @staticmethod
    def _exponent(t: float) -> int:
        mantissa, exponent = math.frexp(t)
        return exponent - 1 if mantissa == 0.5 else exponent

    def minus_measure(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        k = self._exponent(t)
        if k % 2:
            full_top, partial = k - 2, t - 2.0 ** (k - 1)
        else:
            full_top, partial = k - 1, 0.0
        return 2.0 ** (full_top - 1) * 4.0 / 3.0 + partial

    def plus_measure(self, t: float) -> float:
        return t - self.minus_measure(t) if t > 0.0 else 0.0

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        lo = max(lo, hi * 2.0**-64)
        k = self._exponent(lo)
        points = []
        value = 2.0**k
        while value < hi:
            if value > lo:
                points.append(value)
            value *= 2.0
        return points


@dataclass(frozen=True)
class IntervalUnionPattern:
    """I+ as a finite union of disjoint half-open intervals [start, end)."""

    intervals: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def contains(self, t: float) -> bool:
        return any(start <= t < end for start, end in self.intervals)

    def plus_measure(self, t: float) -> float:
        return sum(max(0.0, min(t, end) - start) for start, end in self.intervals if start < t)

    def minus_measure(self, t: float) -> float:
        return t - self.plus_measure(t)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        points = {p for interval in self.intervals for p in interval if lo < p < hi}
        return sorted(points)


class AlternatingRankOneHamiltonian(Hamiltonian):
    """H = xi(phi) xi(phi)^T on I+ and xi(-phi) xi(-phi)^T on I-, on [0, inf)."""

    piecewise = True

    def __init__(self, phi: float, pattern: DyadicPattern | IntervalUnionPattern, *, name: str = ""):
        if not 0.0 < phi < math.pi / 2:
            raise DomainError(f"The angle must lie in (0, pi/2), got {phi}.")
        self.phi = phi
        self.pattern = pattern
        self.interval = Interval(0.0, math.inf)
        self.name = name
        self._c2 = math.cos(phi) ** 2
        self._s2 = math.sin(phi) ** 2
        self._cs = math.cos(phi) * math.sin(phi)

    def _entries(self, t: float) -> Entries:
        sign = 1.0 if self.pattern.contains(t) else -1.0
        return (self._c2, self._s2, sign * self._cs)

    def _primitive_entries(self, t: float) -> Entries:
        plus = self.pattern.plus_measure(t)
        minus = t - plus
        return (t * self._c2, t * self._s2, self._cs * (plus - minus))

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return self.pattern.breakpoints(lo, hi)

    def rank_one_tail(self) -> float | None:
        if not isinstance(self.pattern, IntervalUnionPattern):
            return None
        ends = [p for interval in self.pattern.intervals for p in interval if math.isfinite(p)]
        return max(ends, default=0.0)


class CongruentHamiltonian(Hamiltonian):
    """Q H Q^T for a rotation Q = [[sin phi, -cos phi], [cos phi, sin phi]].

    The Weyl coefficient transforms by the Moebius map of Q.
    """

    def __init__(self, base: Hamiltonian, phi: float):
        self.base = base
        self.phi = phi
        self.Q = np.array([[math.sin(phi), -math.cos(phi)], [math.cos(phi), math.sin(phi)]])
        self.interval = base.interval
        self.limit_point = base.limit_point
        self.piecewise = base.piecewise
        self.primitive_exact = base.primitive_exact
        self.name = f"rotated({base.name}, {phi:.6g})"

    def _congruence(self, entries: Entries) -> Entries:
        x1, x2, x3 = entries
        (q11, q12), (q21, q22) = self.Q
        return (
            q11 * q11 * x1 + 2.0 * q11 * q12 * x3 + q12 * q12 * x2,
            q21 * q21 * x1 + 2.0 * q21 * q22 * x3 + q22 * q22 * x2,
            q11 * q21 * x1 + (q11 * q22 + q12 * q21) * x3 + q12 * q22 * x2,
        )

    def _entries(self, t: float) -> Entries:
        return self._congruence(self.base._entries(t))

    def _primitive_entries(self, t: float) -> Entries:
        return self._congruence(self.base._primitive_entries(t))

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return self.base.breakpoints(lo, hi)

    def power_terms(self) -> tuple[PowerTerms, PowerTerms, PowerTerms] | None:
        terms = self.base.power_terms()
        if terms is None:
            return None
        (q11, q12), (q21, q22) = self.Q
        weights = (
            (q11 * q11, q12 * q12, 2.0 * q11 * q12),
            (q21 * q21, q22 * q22, 2.0 * q21 * q22),
            (q11 * q21, q12 * q22, q11 * q22 + q12 * q21),
        )
        return tuple(
            normalize_terms(
                [(w * c, rho) for w, part in zip(row, terms) for c, rho in part]
            )
            for row in weights
        )  # type: ignore[return-value]

    def weyl_transform(self, value: complex) -> complex:
        (q11, q12), (q21, q22) = self.Q
        return (q11 * value + q12) / (q21 * value + q22)

    def weyl_inverse_transform(self, value: complex) -> complex:
        (q11, q12), (q21, q22) = self.Q
        return (q22 * value - q12) / (-q21 * value + q11)


class ShiftedHamiltonian(Hamiltonian):
    """Restriction of a Hamiltonian to [start, b)."""

    def __init__(self, base: Hamiltonian, start: float):
        self.base = base
        self.interval = Interval(start, base.b)
        self.limit_point = base.limit_point
        self.piecewise = base.piecewise
        self.primitive_exact = base.primitive_exact
        self.name = f"{base.name}[{start:.6g}:]"
        self._offset = base._primitive_entries(start) if start > base.a else (0.0, 0.0, 0.0)

    def _entries(self, t: float) -> Entries:
        return self.base._entries(t)

    def _primitive_entries(self, t: float) -> Entries:
        values = self.base._primitive_entries(t)
        return tuple(v - o for v, o in zip(values, self._offset))  # type: ignore[return-value]

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return self.base.breakpoints(lo, hi)


class ReparameterizedHamiltonian(Hamiltonian):
    """(H o phi) * phi' on [phi^-1(a), phi^-1(b))."""

    def __init__(
        self,
        base: Hamiltonian,
        phi: Callable[[float], float],
        phi_prime: Callable[[float], float],
        interval: Interval,
    ):
        self.base = base
        self.phi = phi
        self.phi_prime = phi_prime
        self.interval = interval
        self.limit_point = base.limit_point
        self.primitive_exact = base.primitive_exact
        self.name = f"reparameterized({base.name})"

    def _entries(self, u: float) -> Entries:
        scale = self.phi_prime(u)
        return tuple(scale * h for h in self.base._entries(self.phi(u)))  # type: ignore[return-value]

    def _primitive_entries(self, u: float) -> Entries:
        t = self.phi(u)
        if t <= self.base.a:
            return (0.0, 0.0, 0.0)
        return self.base._primitive_entries(t)


def eval_H(H: Hamiltonian, t: float) -> np.ndarray:
    return H.matrix(t)


def primitive_M(H: Hamiltonian) -> PrimitiveM:
    return H.primitive()


def check_invariants(H: Hamiltonian, samples: Iterable[float]) -> list[str]:
    """Sample the pointwise and primitive invariants; return a list of violations."""
    violations: list[str] = []
    primitive = H.primitive()
    previous: tuple[float, float, float] | None = None
    for t in sorted(samples):
        if not H.interval.contains(t):
            continue
        h1, h2, h3 = H.entries(t)
        if not is_psd(h1, h2, h3):
            violations.append(f"H({t}) is not positive semidefinite")
        m1, m2, m3 = primitive.values(t)
        if m3 * m3 > m1 * m2 + 1e-12 * (1.0 + m1 * m2):
            violations.append(f"m3^2 > m1*m2 at t={t}")
        if previous is not None:
            p1, p2, pratio = previous
            if m1 < p1 - 1e-12 * (1.0 + abs(p1)) or m2 < p2 - 1e-12 * (1.0 + abs(p2)):
                violations.append(f"m1 or m2 decreases before t={t}")
            if m2 > 0.0:
                ratio = (m1 * m2 - m3 * m3) / m2
                if ratio < pratio - 1e-9 * (1.0 + abs(pratio)):
                    violations.append(f"det M / m2 decreases before t={t}")
                pratio = ratio
            previous = (m1, m2, pratio)
        else:
            previous = (m1, m2, (m1 * m2 - m3 * m3) / m2 if m2 > 0.0 else -math.inf)
    if violations:
        logger.warning(f"{H.name or type(H).__name__}: {len(violations)} invariant violations")
    return violations


def probe_point(H: Hamiltonian) -> float:
    """A point close to a, inside the first panel when panels are known."""
    scale = min(1.0, H.interval.length) if math.isfinite(H.interval.length) else 1.0
    candidate = H.a + 1e-9 * scale
    breaks = H.breakpoints(H.a, H.a + scale)
    if breaks:
        candidate = min(candidate, H.a + 0.5 * (breaks[0] - H.a))
    return candidate


def vanishing_entry(H: Hamiltonian, t: float | None = None) -> str | None:
    """Return 'h1' or 'h2' if that diagonal entry integrates to zero on (a, t)."""
    if t is None:
        t = probe_point(H)
    m1, m2, _ = H.primitive().values(t)
    trace = m1 + m2
    if trace <= 0.0:
        return "both"
    if m2 <= VANISHING_RATIO * trace:
        return "h2"
    if m1 <= VANISHING_RATIO * trace:
        return "h1"
    return None
