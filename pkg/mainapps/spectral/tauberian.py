from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Sequence

import numpy as np
from scipy import special

from core.errors import ParameterOutOfRange

from .convergence import DEFAULT_DECADES, ConvergenceVerdict, limsup_estimate, tail_integral
from .measures import SyntheticMeasure, double_arrow, poisson_integral
from .regvar import RegVarFunction, g_star


logger = logging.getLogger(__name__)


TAUBERIAN_GRID = tuple(np.geomspace(1.0, 1e8, 400))
RELATIVE_SLACK = 1e-3


def lower_constant(alpha: float) -> float:
    """(1 - alpha/2)**(1 - alpha/2) (alpha/2)**(alpha/2), taken as 1 at alpha in {0, 2}."""
    if not 0.0 <= alpha <= 2.0:
        raise ParameterOutOfRange(f"The Abelian lower bound needs alpha in [0, 2], got {alpha}.")
    if alpha in (0.0, 2.0):
        return 1.0
    half = alpha / 2.0
    return (1.0 - half) ** (1.0 - half) * half**half


def upper_constant(alpha: float) -> float:
    """Euler's B(1 + alpha/2, 1 - alpha/2) for alpha in [0, 2)."""
    if not 0.0 <= alpha < 2.0:
        raise ParameterOutOfRange(f"The Tauberian upper bound needs alpha in [0, 2), got {alpha}.")
    return math.exp(special.betaln(1.0 + alpha / 2.0, 1.0 - alpha / 2.0))


@dataclass(frozen=True)
class TauberianReport:
    """Grid limsups of r P(ir)/g(r) and double_arrow(r)/g(r) with the two-sided bound.

    ``upper_bound`` is None when alpha = 2 or g stays bounded.
    """

    g_name: str
    alpha: float
    poisson_limsup: float
    counting_limsup: float
    lower_constant: float
    upper_constant: float | None

    @property
    def lower_bound(self) -> float:
        return self.lower_constant * self.counting_limsup

    @property
    def upper_bound(self) -> float | None:
        return None if self.upper_constant is None else self.upper_constant * self.counting_limsup

    @property
    def lower_slack(self) -> float:
        return self.poisson_limsup - self.lower_bound

    @property
    def upper_slack(self) -> float | None:
        bound = self.upper_bound
        return None if bound is None else bound - self.poisson_limsup

    def _holds(self, slack: float | None) -> bool:
        if slack is None:
            return True
        return slack >= -RELATIVE_SLACK * max(self.poisson_limsup, 1e-300)

    @property
    def lower_ok(self) -> bool:
        return self._holds(self.lower_slack)

    @property
    def upper_ok(self) -> bool:
        return self._holds(self.upper_slack)

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok

    def as_dict(self) -> dict:
        return {
            "g": self.g_name,
            "alpha": self.alpha,
            "poisson_limsup": self.poisson_limsup,
            "counting_limsup": self.counting_limsup,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "ok": self.ok,
        }


def tauberian_check(
    mu: SyntheticMeasure,
    g: RegVarFunction,
    *,
    grid: Sequence[float] = TAUBERIAN_GRID,
) -> TauberianReport:
    """Both limsups on a geometric grid, compared through the Abelian and Tauberian constants."""
    rs = np.asarray(grid, dtype=float)
    poisson = limsup_estimate([r * poisson_integral(mu, 1j * r) / g(r) for r in rs], rs, name="r P(ir)/g")
    counting = limsup_estimate([double_arrow(mu, r) / g(r) for r in rs], rs, name="double_arrow/g")
    upper = upper_constant(g.alpha) if g.alpha < 2.0 and g.unbounded else None
    report = TauberianReport(
        g_name=g.name,
        alpha=g.alpha,
        poisson_limsup=poisson.limsup,
        counting_limsup=counting.limsup,
        lower_constant=lower_constant(g.alpha),
        upper_constant=upper,
    )
    if not report.ok:
        logger.warning(f"Tauberian bounds fail for {mu.name or 'mu'} with {g.name}: {report.as_dict()}")
    else:
        logger.info(
            f"Tauberian check for {mu.name or 'mu'} with {g.name}: "
            f"{report.lower_bound:.6g} <= {report.poisson_limsup:.6g} <= {report.upper_bound}"
        )
    return report


@dataclass(frozen=True)
class TailEquivalence:
    poisson_side: ConvergenceVerdict
    counting_side: ConvergenceVerdict

    @property
    def agree(self) -> bool | None:
        left, right = self.poisson_side.convergent, self.counting_side.convergent
        if left is None or right is None:
            return None
        return left == right


def poisson_tail_equivalence(
    mu: SyntheticMeasure,
    g: RegVarFunction,
    *,
    decades: int = DEFAULT_DECADES,
) -> TailEquivalence:
    """integral of P(ir)/g(r) over [1, inf) against integral of double_arrow(r) g_star(r)/r**3.

    The weight measure is r/g(r) dr, whose distribution function from 1 is g_star.
    """
    poisson = tail_integral(
        lambda r: poisson_integral(mu, 1j * r) / g(r), 1.0, decades=decades, name="P(ir)/g"
    )
    counting = tail_integral(
        lambda r: double_arrow(mu, r) * g_star(g, r) / r**3, 1.0, decades=decades, name="double_arrow g_star/r^3"
    )
    result = TailEquivalence(poisson_side=poisson, counting_side=counting)
    if result.agree is False:
        logger.warning(f"Poisson and counting tails disagree for {mu.name or 'mu'} with {g.name}")
    return result


@dataclass(frozen=True)
class PartsIdentity:
    lhs: float
    rhs: float
    boundary: tuple[float, ...]

    @property
    def exact(self) -> bool:
        return self.lhs == self.rhs


def integration_by_parts_identity(
    mu_atoms: Sequence[tuple[float, float]],
    nu_atoms: Sequence[tuple[float, float]],
) -> PartsIdentity:
    """sum of mu([a, t)) nu({t}) against sum of nu((t, b)) mu({t}) for discrete measures.

    Both sides are the same pairwise products mu({s}) nu({t}) with s < t, summed
    with math.fsum. ``boundary`` samples mu([a, x)) nu([x, b)) at every atom.
    """
    mu = sorted((float(t), float(m)) for t, m in mu_atoms)
    nu = sorted((float(t), float(m)) for t, m in nu_atoms)
    if any(m < 0.0 for _, m in mu + nu):
        raise ParameterOutOfRange("Atom masses must be non-negative.")
    lhs = math.fsum(ms * mt for t, mt in nu for s, ms in mu if s < t)
    rhs = math.fsum(ms * mt for s, ms in mu for t, mt in nu if t > s)
    points = sorted({t for t, _ in mu + nu})
    boundary = tuple(
        math.fsum(m for s, m in mu if s < x) * math.fsum(m for t, m in nu if t >= x) for x in points
    )
    return PartsIdentity(lhs=lhs, rhs=rhs, boundary=boundary)
