from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np
from scipy import integrate

from core.errors import DomainError, NotSupported
from mainapps.estimator.constants import kasahara_band
from mainapps.hamiltonians.hamiltonian import (
    CallableHamiltonian,
    Hamiltonian,
    Interval,
    Panel,
    PiecewiseConstantHamiltonian,
    PowerPrimitiveHamiltonian,
)
from mainapps.hamiltonians.transforms import trace_normalize
from mainapps.spectral.convergence import DEFAULT_DECADES, ConvergenceVerdict, endpoint_integral
from mainapps.spectral.regvar import RegVarFunction
from mainapps.weyl_solver.solver import CertifiedValue, weyl_coefficient

from .monotone import CallableMonotone, InfiniteTail, MonotoneFunction, PiecewiseLinear, PiecewisePower


logger = logging.getLogger(__name__)


MASS_TOLERANCE = 1e-15
LENGTH_DECADES = 12
LENGTH_STABLE = 1e-12


@dataclass(frozen=True)
class KreinString:
    """A string (L, m): m non-decreasing, left-continuous on [0, L) with m(0) = 0."""

    length: float
    mass: MonotoneFunction
    name: str = ""

    def __post_init__(self) -> None:
        if not self.length >= 0.0:
            raise DomainError(f"The string length must be non-negative, got {self.length}.")
        if self.mass.x0 != 0.0:
            raise DomainError("The mass distribution must start at x=0.")
        if self.length > 0.0 and abs(self.mass(0.0)) > MASS_TOLERANCE:
            raise DomainError(f"The mass distribution must vanish at 0, got {self.mass(0.0)}.")

    def __call__(self, x: float) -> float:
        if not 0.0 <= x < self.length:
            raise DomainError(f"x={x} lies outside [0, {self.length}).")
        return self.mass(x)

    @property
    def total_mass(self) -> float:
        """m(L-)."""
        return self.mass.end_limit()

    @property
    def regular(self) -> bool:
        return math.isfinite(self.length) and math.isfinite(self.total_mass)

    def _with_tail(self, fn: Callable[[float], float], name: str) -> MonotoneFunction:
        base = CallableMonotone(fn, x0=0.0, x1=self.length, name=name)
        if math.isfinite(self.length):
            return InfiniteTail(base, self.length)
        return base

    def f(self) -> MonotoneFunction:
        """x m(x) on [0, L), L m(L-) at L and +inf beyond when L is finite."""
        return self._with_tail(lambda x: x * self.mass(x), f"x*m({self.name})")

    def extended_mass(self) -> MonotoneFunction:
        """x + m(x), extended the same way as f."""
        return self._with_tail(lambda x: x + self.mass(x), f"x+m({self.name})")

    def mass_integral(self, x: float) -> float:
        """integral of m over [0, x]."""
        if x <= 0.0:
            return 0.0
        mass = self.mass
        if isinstance(mass, PiecewisePower):
            return sum(c * x ** (rho + 1.0) / (rho + 1.0) for c, rho in mass.terms)
        if isinstance(mass, PiecewiseLinear):
            total = 0.0
            n = len(mass.knots)
            for k, lo in enumerate(mass.knots):
                if lo >= x:
                    break
                hi = min(x, mass.knots[k + 1]) if k + 1 < n else x
                total += (hi - lo) * (2.0 * mass.values[k] + mass.slope(k) * (hi - lo)) / 2.0
            return total
        value, _ = integrate.quad(mass, 0.0, x, limit=400)
        return float(value)

    @classmethod
    def power(cls, terms, length: float = math.inf, name: str = "") -> "KreinString":
        return cls(length, PiecewisePower(terms, x1=length), name=name)

    @classmethod
    def linear(cls, knots, values, left_limits=None, *, tail_slope: float = 0.0, length: float = math.inf, name: str = "") -> "KreinString":
        return cls(length, PiecewiseLinear(knots, values, left_limits, tail_slope=tail_slope, x1=length), name=name)


class _PrimitiveEntry(MonotoneFunction):
    """t -> m1(t) with a known limit at b."""

    def __init__(self, H: Hamiltonian, limit: float):
        self.H = H
        self.primitive = H.primitive()
        self.x0 = H.a
        self.x1 = H.b
        self.limit = limit

    def __call__(self, t: float) -> float:
        return self.primitive.m1(min(t, self.H.b))

    def end_limit(self) -> float:
        return self.limit

    def end_attained(self) -> bool:
        return math.isfinite(self.H.b) and self(self.H.b) >= self.limit


def _limit(H: Hamiltonian, index: int) -> float:
    primitive = H.primitive()
    if math.isfinite(H.b):
        return primitive.values(H.b)[index]
    values = [primitive.values(H.a + 10.0**k)[index] for k in range(LENGTH_DECADES + 1)]
    if abs(values[-1] - values[-4]) <= LENGTH_STABLE * max(abs(values[-1]), 1e-300):
        return values[-1]
    return math.inf


def _string_from_panels(H: PiecewiseConstantHamiltonian) -> KreinString:
    knots, left, right = [0.0], [0.0], [0.0]
    tail_slope = 0.0
    length = 0.0
    panels = H.constant_panels
    for index, panel in enumerate(panels):
        last = index == len(panels) - 1
        if panel.h1 <= 0.0:
            if not last:
                right[-1] += panel.h2 * panel.length
            continue
        if math.isinf(panel.length):
            tail_slope = panel.h2 / panel.h1
            length = math.inf
            break
        knots.append(knots[-1] + panel.h1 * panel.length)
        value = right[-1] + panel.h2 * panel.length
        left.append(value)
        right.append(value)
    if not math.isinf(length):
        length = knots[-1]
    if length == 0.0:
        return KreinString(0.0, PiecewiseLinear([0.0], [0.0], x1=0.0), name=H.name)
    if math.isfinite(length) and len(knots) > 1:
        # the knot at L only carries m(L-)
        right[-1] = left[-1]
    mass = PiecewiseLinear(knots, right, left, tail_slope=tail_slope, x1=length)
    return KreinString(length, mass, name=H.name)


def string_from_hamiltonian(H: Hamiltonian) -> KreinString:
    """L = lim m1 at b and m = m2 o m1^-; h3 plays no part."""
    if isinstance(H, PiecewiseConstantHamiltonian):
        return _string_from_panels(H)
    terms = H.power_terms()
    if terms is not None and len(terms[0]) == 1 and all(c >= 0.0 for c, _ in terms[1]):
        (c1, rho1), = terms[0]
        length = math.inf if math.isinf(H.b) else c1 * (H.b - H.a) ** rho1
        mass = PiecewisePower(
            [(c2 * c1 ** (-rho2 / rho1), rho2 / rho1) for c2, rho2 in terms[1]], x1=length
        )
        return KreinString(length, mass, name=H.name)

    length = _limit(H, 0)
    m1 = _PrimitiveEntry(H, length)
    primitive = H.primitive()

    def mass(x: float) -> float:
        return primitive.m2(m1.inverse(x)) if x > 0.0 else primitive.m2(H.a)

    logger.debug(f"String of {H.name or type(H).__name__} by composition, L={length}")
    return KreinString(length, CallableMonotone(mass, x0=0.0, x1=length, name=f"m2 o m1^-({H.name})"), name=H.name)


def _panels_from_linear(S: KreinString, *, trace_normed: bool) -> list[Panel]:
    mass: PiecewiseLinear = S.mass  # type: ignore[assignment]
    if mass.knots[0] != 0.0:
        raise DomainError("The first knot of the mass distribution must be 0.")
    panels: list[Panel] = []
    t = 0.0
    n = len(mass.knots)
    for k, x_k in enumerate(mass.knots):
        if x_k >= S.length:
            break
        jump = mass.values[k] - mass.left_limits[k]
        if jump > 0.0:
            panels.append(Panel(t, t + jump, 0.0, 1.0, 0.0))
            t += jump
        x_next = min(mass.knots[k + 1], S.length) if k + 1 < n else S.length
        s = mass.slope(k)
        entries = (1.0 / (1.0 + s), s / (1.0 + s)) if trace_normed else (1.0, s)
        scale = (1.0 + s) if trace_normed else 1.0
        if math.isinf(x_next):
            panels.append(Panel(t, math.inf, entries[0], entries[1], 0.0))
            return panels
        end = t + scale * (x_next - x_k)
        panels.append(Panel(t, end, entries[0], entries[1], 0.0))
        t = end
    panels.append(Panel(t, math.inf, 0.0, 1.0, 0.0))
    return panels


def natural_hamiltonian(S: KreinString) -> Hamiltonian:
    """diag(1, m') with x as the parameter, jumps of m becoming intervals of diag(0, 1)."""
    mass = S.mass
    if isinstance(mass, PiecewiseLinear):
        return PiecewiseConstantHamiltonian(_panels_from_linear(S, trace_normed=False), name=f"natural({S.name})")
    if isinstance(mass, PiecewisePower):
        if math.isinf(S.length):
            return PowerPrimitiveHamiltonian([(1.0, 1.0)], mass.terms, name=f"natural({S.name})")
        L = S.length
        return CallableHamiltonian(
            Interval(0.0, math.inf),
            lambda t: 1.0 if t < L else 0.0,
            lambda t: mass.derivative(t) if t < L else 1.0,
            jumps=(L,),
            limit_point=True,
            name=f"natural({S.name})",
        )
    raise NotSupported("Natural Hamiltonians need a piecewise linear or power mass distribution.")


def hamiltonian_from_string(S: KreinString) -> Hamiltonian:
    """The trace-normed diag(d m~^-/dt, 1 - d m~^-/dt) on [0, inf) with m~(x) = x + m(x)."""
    if isinstance(S.mass, PiecewiseLinear):
        return PiecewiseConstantHamiltonian(_panels_from_linear(S, trace_normed=True), name=f"H({S.name})")
    return trace_normalize(natural_hamiltonian(S))


def _root_in_upper_half_plane(w: complex) -> complex:
    z = np.sqrt(complex(w))
    return -z if z.imag < 0.0 else z


def q_string(S: KreinString, w: complex, eps: float | None = None) -> CertifiedValue:
    """q_S(w) = q_H(z) / z with z**2 = w and Im z > 0."""
    w = complex(w)
    if w.imag == 0.0 and w.real >= 0.0:
        raise DomainError(f"q_S is evaluated off [0, inf), got {w}.")
    z = _root_in_upper_half_plane(w)
    result = weyl_coefficient(natural_hamiltonian(S), z, eps)
    value = result.value / z
    if w.imag == 0.0:
        value = complex(value.real, 0.0)
    return CertifiedValue(value=value, radius=result.radius / abs(z), t=result.t)


def _check_positive_mass(S: KreinString) -> None:
    probe = min(1e-9, 0.5 * S.length) if S.length > 0.0 else 0.0
    if probe <= 0.0 or S.mass.right_limit(0.0) > MASS_TOLERANCE or S.mass(probe) <= 0.0:
        raise DomainError(
            message="Need m(0+) = 0 and m > 0 on (0, L).",
            payload={"name": S.name},
        )


@dataclass(frozen=True)
class KasaharaEstimate:
    y: float
    f_inverse: float
    q_value: float
    band: tuple[float, float]

    @property
    def ratio(self) -> float:
        return self.q_value / self.f_inverse

    @property
    def in_band(self) -> bool:
        lower, upper = self.band
        return lower <= self.ratio <= upper


def kasahara_estimate(S: KreinString, y: float, *, q: float | None = None, eps: float | None = None) -> KasaharaEstimate:
    """f^-(1/y) next to q_S(-y) for f(x) = x m(x)."""
    if y <= 0.0:
        raise DomainError(f"y must be positive, got {y}.")
    _check_positive_mass(S)
    f_inverse = S.f().inverse(1.0 / y)
    value = q_string(S, -y, eps).value.real
    estimate = KasaharaEstimate(y=y, f_inverse=f_inverse, q_value=value, band=kasahara_band(q))
    if not estimate.in_band:
        logger.warning(f"q_S(-{y})/f^-(1/y) = {estimate.ratio:.6g} leaves the band {estimate.band}")
    return estimate


@dataclass(frozen=True)
class KacStringReport:
    x0: float
    string_side: ConvergenceVerdict
    hamiltonian_side: ConvergenceVerdict

    @property
    def convergent(self) -> bool | None:
        return self.string_side.convergent

    @property
    def agree(self) -> bool | None:
        left, right = self.string_side.convergent, self.hamiltonian_side.convergent
        if left is None or right is None:
            return None
        return left == right


def kac_string_criterion(
    S: KreinString,
    g: RegVarFunction,
    x0: float | None = None,
    *,
    strict: bool = False,
    decades: int = DEFAULT_DECADES,
) -> KacStringReport:
    """Convergence of the integral of g(1 / integral_0^x m) over (0, x0).

    The same verdict is computed on the Hamiltonian side, as the integral of
    h1 g(1/(m1 m2)) over (0, x0) for the natural Hamiltonian.
    """
    _check_positive_mass(S)
    if x0 is None:
        x0 = min(1.0, 0.5 * S.length)
    if not 0.0 < x0 < S.length:
        raise DomainError(f"x0={x0} must lie in (0, {S.length}).")
    string_side = endpoint_integral(
        lambda x: g(1.0 / S.mass_integral(x)), 0.0, x0, decades=decades, strict=strict, name="g(1/int m)"
    )
    H = natural_hamiltonian(S)
    primitive = H.primitive()

    def weighted(t: float) -> float:
        m1, m2, _ = primitive.values(t)
        return H.entries(t)[0] * g(1.0 / (m1 * m2))

    hamiltonian_side = endpoint_integral(
        weighted, H.a, x0, breakpoints=H.breakpoints, decades=decades, strict=strict, name="h1 g(1/(m1 m2))"
    )
    report = KacStringReport(x0=x0, string_side=string_side, hamiltonian_side=hamiltonian_side)
    if report.agree is False:
        logger.warning(f"Kac string criterion for {S.name or 'string'}: string and Hamiltonian sides disagree")
    return report


@dataclass(frozen=True)
class SandwichReport:
    c: float
    lower: float
    middle: float
    upper: float

    @property
    def ok(self) -> bool:
        slack = 1e-6 * max(abs(self.upper), 1.0)
        return self.lower <= self.middle + slack and self.middle <= self.upper + slack


def string_sandwich(S: KreinString, F: Callable[[float], float], c: float) -> SandwichReport:
    """The three integrals bracketing the integral of F(m1 m2) h1 over (0, c).

    F is non-increasing; the outer integrals run over (0, 2 m1(c)) with weight
    1/2 and over (0, m1(c)) against F(integral_0^x m).
    """
    H = natural_hamiltonian(S)
    if not H.a < c < H.b:
        raise DomainError(f"c={c} must lie in ({H.a}, {H.b}).")
    primitive = H.primitive()
    m1_c = primitive.m1(c)
    outer = lambda x: F(S.mass_integral(x))

    def middle_integrand(t: float) -> float:
        m1, m2, _ = primitive.values(t)
        return F(m1 * m2) * H.entries(t)[0]

    lower = 0.5 * endpoint_integral(outer, 0.0, 2.0 * m1_c, name="lower").value
    middle = endpoint_integral(middle_integrand, H.a, c, breakpoints=H.breakpoints, name="middle").value
    upper = endpoint_integral(outer, 0.0, m1_c, name="upper").value
    report = SandwichReport(c=c, lower=lower, middle=middle, upper=upper)
    if not report.ok:
        logger.warning(f"String sandwich fails at c={c}: {lower:.6g}, {middle:.6g}, {upper:.6g}")
    return report
