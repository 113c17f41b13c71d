from __future__ import annotations

from abc import ABC, abstractmethod
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
import logging
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from core.errors import DomainError, NotMonotone
from mainapps.hamiltonians.hamiltonian import PowerTerms, normalize_terms


logger = logging.getLogger(__name__)


BISECTION_STEPS = 400
MONOTONE_TOLERANCE = 1e-12


class MonotoneFunction(ABC):
    """A non-decreasing f: [x0, x1) -> (-inf, inf]."""

    x0: float = 0.0
    x1: float = math.inf

    @abstractmethod
    def __call__(self, x: float) -> float:
        ...

    def right_limit(self, x: float) -> float:
        return self(x)

    def end_limit(self) -> float:
        """b' = lim f(x) as x -> x1."""
        if math.isfinite(self.x1):
            return self(math.nextafter(self.x1, -math.inf))
        x = max(1.0, abs(self.x0)) + self.x0
        previous = self(x)
        for _ in range(2000):
            x *= 2.0
            value = self(x)
            if value == previous and x > 1e300:
                break
            previous = value
            if math.isinf(value) or x > 1e300:
                break
        return previous

    def end_attained(self) -> bool:
        return False

    def hull(self) -> tuple[float, float, bool]:
        """conv(ran f) as (lower, upper, upper_included)."""
        return (self(self.x0), self.end_limit(), self.end_attained())

    def check_hull(self, y: float) -> None:
        lower, upper, included = self.hull()
        if y < lower or y > upper or (y == upper and not included and math.isfinite(upper)):
            raise DomainError(
                message=f"y={y} lies outside conv(ran f) = [{lower}, {upper}{']' if included else ')'}.",
                payload={"y": y, "lower": lower, "upper": upper},
            )

    def inverse(self, y: float) -> float:
        """inf{x in [x0, x1): f(x) >= y}."""
        self.check_hull(y)
        if self(self.x0) >= y:
            return self.x0
        return self._bisect(y)

    def _bisect(self, y: float) -> float:
        lo = self.x0
        hi = self._upper_bracket(y)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo <= 4e-16 * abs(hi):
                break
            if self(mid) >= y:
                hi = mid
            else:
                lo = mid
        return hi

    def _upper_bracket(self, y: float) -> float:
        if math.isfinite(self.x1):
            hi = self.x1
            candidate = math.nextafter(hi, -math.inf)
            return candidate if self(candidate) >= y else hi
        step = 1.0
        hi = self.x0 + step
        while self(hi) < y:
            step *= 2.0
            hi = self.x0 + step
            if step > 1e300:
                raise DomainError(f"No x with f(x) >= {y}.")
        return hi

    def check_monotone(self, samples: Iterable[float]) -> None:
        previous = -math.inf
        for x in sorted(samples):
            value = self(x)
            if value < previous - MONOTONE_TOLERANCE * (1.0 + abs(previous)):
                raise NotMonotone(f"f decreases before x={x}.")
            previous = value


class PiecewisePower(MonotoneFunction):
    """f(x) = sum c * (x - x0)**rho with c > 0 and rho > 0."""

    def __init__(self, terms: Iterable[Sequence[float]], *, x0: float = 0.0, x1: float = math.inf):
        self.terms: PowerTerms = normalize_terms(terms)
        if any(c < 0.0 for c, _ in self.terms):
            raise NotMonotone("Power terms need non-negative coefficients.")
        self.x0 = x0
        self.x1 = x1

    def __call__(self, x: float) -> float:
        u = x - self.x0
        if u < 0.0:
            raise DomainError(f"x={x} lies left of {self.x0}.")
        return sum(c * u**rho for c, rho in self.terms)

    def derivative(self, x: float) -> float:
        u = x - self.x0
        return sum(c * rho * u ** (rho - 1.0) for c, rho in self.terms)

    def end_limit(self) -> float:
        if math.isinf(self.x1):
            return math.inf if self.terms else 0.0
        return self(self.x1)

    def inverse(self, y: float) -> float:
        self.check_hull(y)
        if y <= 0.0:
            return self.x0
        if len(self.terms) == 1:
            c, rho = self.terms[0]
            return self.x0 + (y / c) ** (1.0 / rho)
        return self._bisect(y)


class PiecewiseLinear(MonotoneFunction):
    """Piecewise linear with jumps at knots.

    On (x_k, x_{k+1}) f runs linearly from values[k] to left_limits[k + 1];
    f(x_k) = left_limits[k], so f is left-continuous. After the last knot f
    grows with ``tail_slope``.
    """

    def __init__(
        self,
        knots: Sequence[float],
        values: Sequence[float],
        left_limits: Sequence[float] | None = None,
        *,
        tail_slope: float = 0.0,
        x1: float = math.inf,
    ):
        if not knots or len(values) != len(knots):
            raise DomainError("knots and values must be non-empty and of equal length.")
        self.knots = [float(x) for x in knots]
        self.values = [float(v) for v in values]
        self.left_limits = [float(v) for v in (left_limits if left_limits is not None else values)]
        if len(self.left_limits) != len(self.knots):
            raise DomainError("left_limits must match knots.")
        if any(b <= a for a, b in zip(self.knots[:-1], self.knots[1:])):
            raise DomainError("knots must be strictly increasing.")
        self.tail_slope = float(tail_slope)
        self.x0 = self.knots[0]
        self.x1 = x1
        for k, (left, right) in enumerate(zip(self.left_limits, self.values)):
            if right < left - MONOTONE_TOLERANCE * (1.0 + abs(left)):
                raise NotMonotone(f"Negative jump at knot {self.knots[k]}.")
            if k + 1 < len(self.knots) and self.left_limits[k + 1] < right - MONOTONE_TOLERANCE * (1.0 + abs(right)):
                raise NotMonotone(f"f decreases on ({self.knots[k]}, {self.knots[k + 1]}).")
        if self.tail_slope < 0.0:
            raise NotMonotone("tail_slope must be non-negative.")

    def __call__(self, x: float) -> float:
        if x < self.x0:
            raise DomainError(f"x={x} lies left of {self.x0}.")
        k = bisect_right(self.knots, x) - 1
        if x == self.knots[k]:
            return self.left_limits[k]
        return self.right_limit(x)

    def right_limit(self, x: float) -> float:
        k = bisect_right(self.knots, x) - 1
        if k == len(self.knots) - 1:
            return self.values[k] + self.tail_slope * (x - self.knots[k])
        x_k, x_next = self.knots[k], self.knots[k + 1]
        weight = (x - x_k) / (x_next - x_k)
        return self.values[k] + weight * (self.left_limits[k + 1] - self.values[k])

    def slope(self, k: int) -> float:
        if k == len(self.knots) - 1:
            return self.tail_slope
        return (self.left_limits[k + 1] - self.values[k]) / (self.knots[k + 1] - self.knots[k])

    def _last_piece(self) -> int:
        return bisect_left(self.knots, self.x1) - 1

    def end_limit(self) -> float:
        if math.isinf(self.x1):
            return math.inf if self.tail_slope > 0.0 else self.values[-1]
        k = self._last_piece()
        if k < 0:
            return self.left_limits[0]
        if k + 1 < len(self.knots) and self.knots[k + 1] == self.x1:
            return self.left_limits[k + 1]
        return self.values[k] + self.slope(k) * (self.x1 - self.knots[k])

    def end_attained(self) -> bool:
        if math.isinf(self.x1):
            return self.tail_slope == 0.0
        # only a flat last piece reaches f(x1-) inside [x0, x1)
        k = self._last_piece()
        return k >= 0 and self.values[k] >= self.end_limit()

    def inverse(self, y: float) -> float:
        self.check_hull(y)
        n = len(self.knots)
        for k in range(n):
            if self.left_limits[k] >= y or self.values[k] >= y:
                return self.knots[k]
            end_value = self.left_limits[k + 1] if k + 1 < n else math.inf
            if k + 1 == n and self.tail_slope == 0.0:
                break
            if end_value > y:
                return self.knots[k] + (y - self.values[k]) / self.slope(k)
        raise DomainError(f"No x with f(x) >= {y}.")

    def jumps(self) -> list[tuple[float, float]]:
        return [(x, right - left) for x, left, right in zip(self.knots, self.left_limits, self.values) if right > left]

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]], **kwargs) -> "PiecewiseLinear":
        """Continuous interpolant through (x, f(x)) pairs."""
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        return cls(xs, ys, ys, **kwargs)


class CallableMonotone(MonotoneFunction):
    def __init__(self, fn: Callable[[float], float], *, x0: float = 0.0, x1: float = math.inf, name: str = ""):
        self.fn = fn
        self.x0 = x0
        self.x1 = x1
        self.name = name

    def __call__(self, x: float) -> float:
        if x < self.x0 or x >= self.x1:
            raise DomainError(f"x={x} lies outside [{self.x0}, {self.x1}).")
        return float(self.fn(x))


class InfiniteTail(MonotoneFunction):
    """f on [x0, L), its left limit at L and +inf beyond."""

    def __init__(self, base: MonotoneFunction, length: float):
        self.base = base
        self.length = length
        self.x0 = base.x0
        self.x1 = math.inf

    def __call__(self, x: float) -> float:
        if x < self.length:
            return self.base(x)
        if x == self.length:
            return self.base.end_limit()
        return math.inf

    def end_attained(self) -> bool:
        return True

    def end_limit(self) -> float:
        return math.inf

    def inverse(self, y: float) -> float:
        lower, upper, included = self.base.hull()
        if y < lower:
            raise DomainError(f"y={y} lies below f({self.x0}) = {lower}.")
        if y < upper or (y == upper and included):
            return self.base.inverse(y)
        return self.length


def gen_inverse(f: MonotoneFunction) -> Callable[[float], float]:
    """The generalised inverse f^-(y) = inf{x : f(x) >= y} on conv(ran f)."""
    return f.inverse


def compose_affine(f: MonotoneFunction, scale_x: float, shift_x: float, scale_y: float, shift_y: float) -> CallableMonotone:
    """psi o f o phi for increasing affine phi(u) = scale_x u + shift_x and psi(v) = scale_y v + shift_y."""
    if scale_x <= 0.0 or scale_y <= 0.0:
        raise NotMonotone("Affine maps must be increasing.")
    x0 = (f.x0 - shift_x) / scale_x
    x1 = (f.x1 - shift_x) / scale_x if math.isfinite(f.x1) else math.inf
    return CallableMonotone(lambda u: scale_y * f(scale_x * u + shift_x) + shift_y, x0=x0, x1=x1)


@dataclass(frozen=True)
class DoublingReport:
    c: float
    rho: float
    ratios: tuple[float, ...]
    bound: float

    @property
    def ok(self) -> bool:
        return all(1.0 - 1e-12 <= ratio <= self.bound * (1.0 + 1e-9) for ratio in self.ratios)


def doubling_ratio_bounds(f: MonotoneFunction, c: float, ys: Sequence[float], rho: float) -> DoublingReport:
    """f^-(c y) / f^-(y) for c > 1 when f(x) / x**rho is non-decreasing; bounded by c**(1/rho)."""
    if c <= 1.0:
        raise DomainError("The doubling factor must exceed 1.")
    if rho <= 0.0:
        raise DomainError("rho must be positive.")
    samples = np.geomspace(1e-3, 1e3, 25)
    if np.any(np.diff([f(x) / x**rho for x in samples]) < -1e-12):
        raise NotMonotone(f"f(x)/x^{rho} is not non-decreasing.")
    ratios = []
    for y in ys:
        base = f.inverse(y)
        if base <= 0.0:
            continue
        ratios.append(f.inverse(c * y) / base)
    report = DoublingReport(c=c, rho=rho, ratios=tuple(ratios), bound=c ** (1.0 / rho))
    logger.debug(f"Doubling ratios for c={c}: max {max(ratios, default=math.nan):.6g}, bound {report.bound:.6g}")
    return report
