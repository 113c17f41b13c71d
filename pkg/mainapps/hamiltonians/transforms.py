from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np
from django.conf import settings
from scipy import optimize

from core.errors import ConfigurationError, NoRankOneLimit, NotMonotone, NotSupported

from .hamiltonian import (
    CongruentHamiltonian,
    Hamiltonian,
    Interval,
    ReparameterizedHamiltonian,
    ShiftedHamiltonian,
    VANISHING_RATIO,
    probe_point,
    vanishing_entry,
)


logger = logging.getLogger(__name__)


RANK_ONE_TOLERANCE = 1e-6


def _get_split_cap() -> int:
    try:
        return int(getattr(settings, "CANONICAL_WEYL_SPLIT_CAP", 16))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_SPLIT_CAP must be an integer.") from exc


def rotate(H: Hamiltonian, phi: float) -> Hamiltonian:
    if abs(math.cos(phi)) < 1e-15 and math.sin(phi) > 0.0:
        return H
    if isinstance(H, CongruentHamiltonian):
        combined = (phi + H.phi - math.pi / 2) % (2.0 * math.pi)
        if abs(math.cos(combined)) < 1e-15:
            return H.base
        return CongruentHamiltonian(H.base, combined)
    return CongruentHamiltonian(H, phi)


def invert_JHJ(H: Hamiltonian) -> Hamiltonian:
    """-JHJ = [[h2, -h3], [-h3, h1]]; its Weyl coefficient is -1/q_H."""
    return rotate(H, 0.0)


def rotation_mobius(phi: float, value: complex) -> complex:
    """Weyl coefficient of rotate(H, phi) given q_H = value."""
    s, c = math.sin(phi), math.cos(phi)
    return (s * value - c) / (c * value + s)


@dataclass(frozen=True)
class RotationLimit:
    c1: float
    c2: float
    c3: float
    phi: float


def derive_rotation(H: Hamiltonian) -> RotationLimit:
    """Limit of M(t)/tr M(t) as t -> a, when it is a rank-one dyad."""
    terms = H.power_terms()
    if terms is not None:
        c1, c2, c3 = _leading_power_limit(terms)
    else:
        c1, c2, c3 = _sampled_limit(H)

    defect = c1 * c2 - c3 * c3
    if c2 <= 0.0 or c1 <= 0.0 or abs(defect) > RANK_ONE_TOLERANCE:
        raise NoRankOneLimit(
            message=f"M/tr M tends to ({c1:.6g}, {c2:.6g}, {c3:.6g}), which is not a rank one dyad.",
            payload={"c1": c1, "c2": c2, "c3": c3, "defect": defect},
        )
    phi = math.atan2(math.sqrt(c2), c3 / math.sqrt(c2))
    logger.info(f"Rotation limit for {H.name or type(H).__name__}: c=({c1:.6g}, {c2:.6g}, {c3:.6g}), phi={phi:.10g}")
    return RotationLimit(c1, c2, c3, phi)


def _leading_power_limit(terms) -> tuple[float, float, float]:
    exponents = [rho for part in terms[:2] for _, rho in part]
    if not exponents:
        raise NoRankOneLimit("The primitive has no diagonal terms.")
    lowest = min(exponents)

    def leading(part) -> float:
        return sum(c for c, rho in part if abs(rho - lowest) < 1e-12)

    c1, c2, c3 = (leading(part) for part in terms)
    trace = c1 + c2
    return (c1 / trace, c2 / trace, c3 / trace)


def _sampled_limit(H: Hamiltonian) -> tuple[float, float, float]:
    primitive = H.primitive()
    scale = probe_point(H) - H.a
    ratios = []
    for factor in np.geomspace(1.0, 1e-4, 5):
        m1, m2, m3 = primitive.values(H.a + scale * factor)
        trace = m1 + m2
        ratios.append(np.array([m1, m2, m3]) / trace)
    if np.max(np.abs(ratios[-1] - ratios[-2])) > RANK_ONE_TOLERANCE:
        raise NoRankOneLimit(
            message="M/tr M does not settle near the left endpoint.",
            payload={"samples": [list(r) for r in ratios]},
        )
    return tuple(float(x) for x in ratios[-1])  # type: ignore[return-value]


def reparameterize(
    H: Hamiltonian,
    phi: Callable[[float], float],
    phi_prime: Callable[[float], float],
    interval: Interval,
    *,
    samples: int = 64,
) -> Hamiltonian:
    upper = interval.b if math.isfinite(interval.b) else interval.a + 1e3
    grid = np.linspace(interval.a, upper, samples, endpoint=not math.isfinite(interval.b))
    values = np.array([phi(u) for u in grid])
    if np.any(np.diff(values) < 0.0):
        raise NotMonotone("The parameter change must be non-decreasing.")
    if abs(values[0] - H.a) > 1e-12 * (1.0 + abs(H.a)):
        raise NotMonotone(f"The parameter change must map {interval.a} to {H.a}.")
    return ReparameterizedHamiltonian(H, phi, phi_prime, interval)


def trace_normalize(H: Hamiltonian) -> Hamiltonian:
    """Reparameterize so that tr H = 1 identically."""
    primitive = H.primitive()

    def inverse_trace(u: float) -> float:
        if u <= 0.0:
            return H.a
        hi = H.a + 1.0
        while primitive.trace(min(hi, H.b)) < u:
            if hi >= H.b:
                return H.b
            hi = H.a + 2.0 * (hi - H.a)
        lo = H.a
        return optimize.brentq(lambda t: primitive.trace(t) - u, lo, min(hi, H.b), xtol=1e-15, rtol=4e-15)

    def derivative(u: float) -> float:
        h1, h2, _ = H._entries(inverse_trace(u))
        return 1.0 / (h1 + h2)

    total = primitive.trace(H.b) if math.isfinite(H.b) else math.inf
    return ReparameterizedHamiltonian(H, inverse_trace, derivative, Interval(0.0, total))


@dataclass(frozen=True)
class IndivisiblePrefix:
    kind: str
    endpoint: float
    weight: float

    TYPE_ZERO = "type_zero"
    TYPE_HALF_PI = "type_half_pi"


@dataclass(frozen=True)
class SplitResult:
    prefixes: tuple[IndivisiblePrefix, ...]
    tail: Hamiltonian | None

    @property
    def prefix(self) -> IndivisiblePrefix | None:
        return self.prefixes[0] if self.prefixes else None

    def compose(self, z: complex, tail_value: complex | None) -> complex:
        """q_H(z) from the tail's Weyl coefficient."""
        value = tail_value
        for prefix in reversed(self.prefixes):
            w = prefix.weight * z
            if prefix.kind == IndivisiblePrefix.TYPE_ZERO:
                value = w if value is None else w + value
            else:
                value = -1.0 / w if value is None else -1.0 / (w - 1.0 / value)
        if value is None:
            raise NotSupported("Nothing to compose.")
        return value

    def peel(self, z: complex, value: complex) -> complex:
        """The tail's Weyl coefficient from q_H(z)."""
        for prefix in self.prefixes:
            w = prefix.weight * z
            if prefix.kind == IndivisiblePrefix.TYPE_ZERO:
                value = value - w
            else:
                value = 1.0 / (w + 1.0 / value)
        return value


def _prefix_end(H: Hamiltonian, entry: str) -> float:
    primitive = H.primitive()
    index = 1 if entry == "h2" else 0

    def vanishes(t: float) -> bool:
        values = primitive.values(t)
        trace = values[0] + values[1]
        return values[index] <= VANISHING_RATIO * trace

    lo = probe_point(H)
    hi = lo
    while True:
        step = H.a + 2.0 * (hi - H.a)
        if step >= H.b:
            if vanishes(H.b) if math.isfinite(H.b) else False:
                return H.b
            hi = H.b
            break
        hi = step
        if not vanishes(hi):
            break
        lo = hi
        if hi - H.a > 1e15:
            raise NotSupported("The Hamiltonian is indivisible on its whole interval.")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if vanishes(mid):
            lo = mid
        else:
            hi = mid

    breaks = H.breakpoints(H.a, hi + 1.0)
    snapped = min(breaks, key=lambda p: abs(p - hi), default=hi)
    return snapped if abs(snapped - hi) <= 1e-9 * (1.0 + abs(hi)) else hi


def detect_and_split_indivisible(H: Hamiltonian, *, split_cap: int | None = None) -> SplitResult:
    cap = _get_split_cap() if split_cap is None else split_cap
    prefixes: list[IndivisiblePrefix] = []
    current: Hamiltonian | None = H
    while current is not None:
        entry = vanishing_entry(current)
        if entry is None:
            break
        if entry == "both":
            raise NotSupported(f"H vanishes identically near {current.a}.")
        if len(prefixes) >= cap:
            raise NotSupported(
                message=f"More than {cap} alternating indivisible prefixes.",
                payload={"split_cap": cap},
            )
        end = _prefix_end(current, entry)
        m1, m2, _ = current.primitive().values(end)
        kind = IndivisiblePrefix.TYPE_ZERO if entry == "h2" else IndivisiblePrefix.TYPE_HALF_PI
        prefixes.append(IndivisiblePrefix(kind=kind, endpoint=end, weight=m1 + m2))
        logger.info(f"Split {kind} prefix of weight {m1 + m2:.6g} ending at {end:.10g}")
        current = None if end >= current.b else ShiftedHamiltonian(current, end)
    return SplitResult(prefixes=tuple(prefixes), tail=current)
