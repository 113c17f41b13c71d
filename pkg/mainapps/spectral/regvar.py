from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from core.errors import DomainError, InsufficientSamples, QuadratureError


logger = logging.getLogger(__name__)


INDEX_TOLERANCE = 0.1
INDEX_GRID = tuple(np.geomspace(1e4, 1e8, 9))
MIN_SAMPLES = 10
POTTER_MARGIN = 0.1


@dataclass(frozen=True)
class RegVarFunction:
    """A regularly varying g: (0, inf) -> (0, inf) with declared index alpha.

    ``power`` holds (c, alpha) when g(r) = c r**alpha exactly; ``star`` is an
    optional closed form of g_star.
    """

    evaluator: Callable[[float], float]
    alpha: float
    name: str = ""
    power: tuple[float, float] | None = None
    star: Callable[[float], float] | None = None
    non_decreasing: bool = True

    def __call__(self, r: float) -> float:
        return float(self.evaluator(r))

    @property
    def unbounded(self) -> bool:
        return self.alpha > 0.0 or (self.power is None and self(1e12) > 10.0 * self(1e3))

    def index_ratios(self, grid: Sequence[float] = INDEX_GRID) -> dict[float, list[float]]:
        """g(lam r) / g(r) / lam**alpha along a growing grid, for lam in {2, 5}."""
        return {lam: [self(lam * r) / self(r) / lam**self.alpha for r in grid] for lam in (2.0, 5.0)}

    def check_index(self, tol: float = INDEX_TOLERANCE) -> bool:
        ratios = self.index_ratios()
        return all(abs(values[-1] - 1.0) <= tol for values in ratios.values())

    @classmethod
    def power_function(cls, alpha: float, c: float = 1.0) -> "RegVarFunction":
        if c <= 0.0:
            raise DomainError("The coefficient of a power comparison function must be positive.")
        return cls(evaluator=lambda r: c * r**alpha, alpha=alpha, name=f"{c:g}*r^{alpha:g}", power=(c, alpha))

    @classmethod
    def log_power(cls, alpha: float, beta: float = 1.0) -> "RegVarFunction":
        """r**alpha * log(e + r)**beta."""
        return cls(
            evaluator=lambda r: r**alpha * math.log(math.e + r) ** beta,
            alpha=alpha,
            name=f"r^{alpha:g}*log(e+r)^{beta:g}",
            non_decreasing=alpha >= 0.0 and beta >= 0.0,
        )


def g_star(g: RegVarFunction, r: float) -> float:
    """g_star(r) = integral of t / g(t) over [1, r]."""
    if r < 1.0:
        raise DomainError(f"g_star needs r >= 1, got {r}.")
    if r == 1.0:
        return 0.0
    if g.star is not None:
        return float(g.star(r))
    if g.power is not None:
        c, alpha = g.power
        if alpha == 2.0:
            return math.log(r) / c
        return (r ** (2.0 - alpha) - 1.0) / ((2.0 - alpha) * c)

    def integrand(s: float) -> float:
        t = math.exp(s)
        return t * t / g(t)

    value, error = integrate.quad(integrand, 0.0, math.log(r), limit=400)
    if not math.isfinite(value) or error > 1e-6 * max(abs(value), 1.0):
        raise QuadratureError(
            message=f"g_star({r:.3e}) for {g.name or 'g'} did not converge.",
            payload={"r": r, "value": value, "error": error},
        )
    return float(value)


@dataclass(frozen=True)
class KaramataReport:
    delta: float
    alpha: float
    part: str
    expected: float
    xs: tuple[float, ...]
    ratios: tuple[float, ...]
    tolerance: float

    @property
    def relative_error(self) -> float:
        return abs(self.ratios[-1] - self.expected) / abs(self.expected)

    @property
    def ok(self) -> bool:
        return self.relative_error <= self.tolerance


def _power_integral(g: RegVarFunction, delta: float, lo: float, hi: float) -> float:
    def integrand(s: float) -> float:
        t = math.exp(s)
        return t ** (delta + 1.0) * g(t)

    total = 0.0
    edges = np.geomspace(lo, hi, max(2, int(math.log10(hi / lo)) + 2)) if math.isfinite(hi) else None
    if edges is None:
        value, _ = integrate.quad(integrand, math.log(lo), math.inf, limit=400)
        return float(value)
    for left, right in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(integrand, math.log(left), math.log(right), limit=200)
        total += value
    return float(total)


def karamata_check(
    g: RegVarFunction,
    delta: float,
    *,
    xs: Sequence[float] = (1e2, 1e3, 1e4, 1e5, 1e6),
    tolerance: float = 0.01,
) -> KaramataReport:
    """x**(delta+1) g(x) against the integral of t**delta g(t), on a diverging grid.

    With delta + alpha + 1 >= 0 the integral runs over [1, x] and the ratio tends
    to delta + alpha + 1; otherwise it runs over [x, inf) and tends to
    -(delta + alpha + 1).
    """
    exponent = delta + g.alpha + 1.0
    part = "i" if exponent > 0.0 else "ii"
    if exponent == 0.0:
        raise DomainError("delta + alpha + 1 = 0 leaves no non-zero limit to check.")
    ratios = []
    for x in xs:
        head = x ** (delta + 1.0) * g(x)
        if part == "i":
            if g.power is not None:
                c, alpha = g.power
                integral = c * (x**exponent - 1.0) / exponent
            else:
                integral = _power_integral(g, delta, 1.0, x)
        else:
            integral = _power_integral(g, delta, x, math.inf)
        ratios.append(head / integral)
    report = KaramataReport(
        delta=delta,
        alpha=g.alpha,
        part=part,
        expected=abs(exponent),
        xs=tuple(xs),
        ratios=tuple(ratios),
        tolerance=tolerance,
    )
    logger.info(f"Karamata ({part}) for {g.name or 'g'}, delta={delta}: {ratios[-1]:.6g} vs {report.expected:.6g}")
    return report


@dataclass(frozen=True)
class IndexEstimate:
    alpha: float
    top_decade_slope: float
    log_correction: float
    potter_ok: bool
    running_max_ratio: float


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def regvar_index_report(samples: Sequence[tuple[float, float]]) -> IndexEstimate:
    """Index of a sampled regularly varying function.

    The index is the log r coefficient of a least-squares fit of log g against
    (log r, log log r, 1), which absorbs a logarithmic slowly varying factor;
    samples with r <= e are left out of that fit. The plain slope over the top
    decade is kept as evidence.
    """
    if len(samples) < MIN_SAMPLES:
        raise InsufficientSamples(
            message=f"Need at least {MIN_SAMPLES} samples, got {len(samples)}.",
            payload={"count": len(samples)},
        )
    data = np.array(sorted(samples), dtype=float)
    r, values = data[:, 0], data[:, 1]
    if np.any(r <= 0.0) or np.any(values <= 0.0):
        raise InsufficientSamples("Samples need positive r and g(r).")
    log_r, log_g = np.log(r), np.log(values)
    top = log_r >= log_r[-1] - math.log(10.0)
    if top.sum() < 2:
        raise InsufficientSamples("The top decade holds fewer than two samples.")
    top_slope = _slope(log_r[top], log_g[top])

    alpha, correction = top_slope, 0.0
    usable = r > math.e
    if usable.sum() >= MIN_SAMPLES:
        design = np.column_stack([log_r[usable], np.log(log_r[usable]), np.ones(usable.sum())])
        coefficients, *_ = np.linalg.lstsq(design, log_g[usable], rcond=None)
        alpha, correction = float(coefficients[0]), float(coefficients[1])

    upper = _slope(log_r[top], log_g[top] - (alpha + POTTER_MARGIN) * log_r[top])
    lower = _slope(log_r[top], log_g[top] - (alpha - POTTER_MARGIN) * log_r[top])
    running_max = np.maximum.accumulate(values)
    report = IndexEstimate(
        alpha=alpha,
        top_decade_slope=top_slope,
        log_correction=correction,
        potter_ok=upper <= 1e-12 and lower >= -1e-12,
        running_max_ratio=float(running_max[-1] / values[-1]),
    )
    if not report.potter_ok:
        logger.warning(f"Sampled g leaves the Potter sandwich around index {alpha:.4f}")
    if alpha > 0.0 and abs(report.running_max_ratio - 1.0) > 1e-2:
        logger.warning(f"Running maximum differs from g by {report.running_max_ratio:.4f} at the top sample")
    return report


def regvar_index_estimate(samples: Sequence[tuple[float, float]]) -> float:
    return regvar_index_report(samples).alpha
