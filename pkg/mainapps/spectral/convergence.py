from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from core.errors import InconclusiveNearEndpoint


logger = logging.getLogger(__name__)


CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

DEFAULT_DECADES = 30
RELATIVE_STEP = 1e-6
STABLE_STEPS = 3
RATIO_WINDOW = 4
GEOMETRIC_RATIO = 0.95
GEOMETRIC_SPREAD = 0.05
DIVERGENT_RATIO = 0.98

Breakpoints = Callable[[float, float], Sequence[float]]


@dataclass(frozen=True)
class ConvergenceVerdict:
    """Evidence for an improper integral near one endpoint.

    ``value`` is the last partial integral, plus the geometric tail when the
    increments decay at a stable ratio.
    """

    verdict: str
    value: float
    increments: tuple[float, ...]
    tail: float = 0.0
    name: str = ""

    @property
    def convergent(self) -> bool | None:
        if self.verdict == INCONCLUSIVE:
            return None
        return self.verdict == CONVERGENT

    @property
    def refinements(self) -> int:
        return len(self.increments)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "value": self.value,
            "tail": self.tail,
            "refinements": self.refinements,
        }


def _segment(f: Callable[[float], float], lo: float, hi: float, origin: float, points: Sequence[float]) -> float:
    """integral of f over [lo, hi] in the variable s = log(t - origin)."""
    s_lo, s_hi = math.log(lo - origin), math.log(hi - origin)
    inner = sorted({math.log(p - origin) for p in points if lo < p < hi})

    def integrand(s: float) -> float:
        u = math.exp(s)
        return f(origin + u) * u

    with np.errstate(all="ignore"):
        value, _ = integrate.quad(integrand, s_lo, s_hi, points=inner[:200] or None, limit=400)
    return float(value)


def _decide(increments: list[float], total: float, rtol: float) -> tuple[str, float]:
    if not math.isfinite(total):
        return (DIVERGENT if total > 0 else INCONCLUSIVE), 0.0
    magnitudes = [abs(x) for x in increments]
    recent = magnitudes[-STABLE_STEPS:]
    if len(recent) == STABLE_STEPS and all(x <= rtol * abs(total) for x in recent):
        return CONVERGENT, 0.0
    if len(magnitudes) <= RATIO_WINDOW:
        return INCONCLUSIVE, 0.0
    window = magnitudes[-RATIO_WINDOW - 1 :]
    if any(x == 0.0 for x in window[:-1]):
        return INCONCLUSIVE, 0.0
    ratios = [b / a for a, b in zip(window[:-1], window[1:])]
    if all(ratio >= DIVERGENT_RATIO for ratio in ratios):
        return DIVERGENT, 0.0
    if max(ratios) < GEOMETRIC_RATIO and max(ratios) - min(ratios) <= GEOMETRIC_SPREAD:
        rho = float(np.mean(ratios))
        return CONVERGENT, increments[-1] * rho / (1.0 - rho)
    return INCONCLUSIVE, 0.0


def _ladder(
    segments: Callable[[int], tuple[float, float]],
    f: Callable[[float], float],
    origin: float,
    breakpoints: Breakpoints | None,
    decades: int,
    rtol: float,
    strict: bool,
    name: str,
) -> ConvergenceVerdict:
    total = 0.0
    increments: list[float] = []
    verdict, tail = INCONCLUSIVE, 0.0
    for k in range(decades + 1):
        lo, hi = segments(k)
        points = breakpoints(lo, hi) if breakpoints is not None else ()
        increment = _segment(f, lo, hi, origin, points)
        if math.isnan(increment):
            logger.debug(f"{name or 'integral'}: non-finite increment at decade {k}")
            break
        total += increment
        if k == 0:
            continue
        increments.append(increment)
        verdict, tail = _decide(increments, total, rtol)
        if verdict != INCONCLUSIVE:
            break
    result = ConvergenceVerdict(verdict=verdict, value=total + tail, increments=tuple(increments), tail=tail, name=name)
    if verdict == INCONCLUSIVE:
        logger.warning(f"{name or 'integral'}: no stable verdict after {len(increments)} refinements")
        if strict:
            raise InconclusiveNearEndpoint(
                message=f"Refinement did not stabilize the verdict for {name or 'the integral'}.",
                payload=result.as_dict(),
            )
    else:
        logger.debug(f"{name or 'integral'}: {verdict} after {len(increments)} refinements, value {result.value:.6g}")
    return result


def endpoint_integral(
    f: Callable[[float], float],
    a: float,
    top: float,
    *,
    breakpoints: Breakpoints | None = None,
    decades: int = DEFAULT_DECADES,
    rtol: float = RELATIVE_STEP,
    strict: bool = False,
    name: str = "",
) -> ConvergenceVerdict:
    """Verdict for the integral of f over (a, top) with the singularity at a.

    The k-th refinement adds the piece over [a + eps_k, a + eps_{k-1}] with
    eps_k = (top - a) 10^-k.
    """
    if not top > a:
        raise ValueError("top must exceed a.")
    width = top - a

    def segments(k: int) -> tuple[float, float]:
        if k == 0:
            return a + 0.1 * width, top
        return a + width * 10.0 ** (-k - 1), a + width * 10.0 ** (-k)

    return _ladder(segments, f, a, breakpoints, decades, rtol, strict, name)


def tail_integral(
    f: Callable[[float], float],
    start: float,
    *,
    breakpoints: Breakpoints | None = None,
    decades: int = DEFAULT_DECADES,
    rtol: float = RELATIVE_STEP,
    strict: bool = False,
    name: str = "",
) -> ConvergenceVerdict:
    """Verdict for the integral of f over (start, inf), start > 0."""
    if start <= 0.0:
        raise ValueError("start must be positive.")

    def segments(k: int) -> tuple[float, float]:
        return start * 10.0**k, start * 10.0 ** (k + 1)

    return _ladder(segments, f, 0.0, breakpoints, decades, rtol, strict, name)


VANISHING = "vanishing"
BOUNDED = "bounded"
UNBOUNDED = "unbounded"

LIMSUP_POINTS = 400
LIMSUP_DECADES = 2.0
TREND_DECADES = 4.0
TREND_SLOPE = 0.02


@dataclass(frozen=True)
class LimsupEstimate:
    """limsup of a sampled quantity as its parameter s tends to infinity.

    ``limsup`` is the maximum over the last two decades of s; ``slope`` is the
    log-log slope over the last four, which decides between a vanishing, a
    bounded and an unbounded quantity.
    """

    limsup: float
    slope: float
    behaviour: str
    scales: tuple[float, ...]
    values: tuple[float, ...]
    name: str = ""

    @property
    def finite(self) -> bool:
        return self.behaviour != UNBOUNDED

    @property
    def vanishes(self) -> bool:
        return self.behaviour == VANISHING

    def as_dict(self) -> dict:
        return {"name": self.name, "limsup": self.limsup, "slope": self.slope, "behaviour": self.behaviour}


def limsup_estimate(values: Sequence[float], scales: Sequence[float], *, name: str = "") -> LimsupEstimate:
    s = np.asarray(scales, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    order = np.argsort(s)
    s, v = s[order], v[order]
    top = s >= s[-1] / 10.0**LIMSUP_DECADES
    limsup = float(np.max(v[top]))
    window = (s >= s[-1] / 10.0**TREND_DECADES) & (v > 0.0) & np.isfinite(v)
    if not np.any(v[top] > 0.0):
        slope, behaviour = -math.inf, VANISHING
    elif not np.all(np.isfinite(v[top])):
        slope, behaviour = math.inf, UNBOUNDED
    elif window.sum() < 2:
        slope, behaviour = 0.0, BOUNDED
    else:
        slope = float(np.polyfit(np.log(s[window]), np.log(v[window]), 1)[0])
        if slope < -TREND_SLOPE:
            behaviour = VANISHING
        elif slope > TREND_SLOPE:
            behaviour = UNBOUNDED
        else:
            behaviour = BOUNDED
    logger.debug(f"{name or 'limsup'}: {limsup:.6g}, slope {slope:.4g}, {behaviour}")
    return LimsupEstimate(
        limsup=limsup,
        slope=slope,
        behaviour=behaviour,
        scales=tuple(float(x) for x in s),
        values=tuple(float(x) for x in v),
        name=name,
    )
