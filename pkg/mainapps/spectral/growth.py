from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable, Sequence

import numpy as np

from core.errors import (
    DomainError,
    InconclusiveNearEndpoint,
    IndivisibleStart,
    NeedsMoreInformation,
    NotSupported,
    ParameterOutOfRange,
)
from mainapps.estimator.bounds import solve_product_level
from mainapps.hamiltonians.hamiltonian import Hamiltonian, vanishing_entry

from .convergence import (
    DEFAULT_DECADES,
    LIMSUP_POINTS,
    VANISHING,
    ConvergenceVerdict,
    LimsupEstimate,
    endpoint_integral,
    limsup_estimate,
    tail_integral,
)
from .measures import SyntheticMeasure, double_arrow
from .regvar import RegVarFunction, g_star


logger = logging.getLogger(__name__)


CUTOFF_PRODUCT = 1e-4
FG_DECADES = 8.0
DOMINANCE_MARGIN = 1e-6
EXPONENT_TOLERANCE = 1e-12

M_HAT = "M_hat"
M = "M"
F = "F"
F0 = "F0"


@dataclass(frozen=True)
class GrowthClassReport:
    """Class memberships of a spectral measure with the evidence behind them.

    ``memberships`` maps M_hat, M, F and F0 to True, False or None when the
    implications at hand do not decide.
    """

    g_name: str
    alpha: float
    conditions: dict[str, ConvergenceVerdict] = field(default_factory=dict)
    limsups: dict[str, LimsupEstimate] = field(default_factory=dict)
    memberships: dict[str, bool | None] = field(default_factory=dict)
    diagonally_dominant: bool | None = None
    one_directional: tuple[str, ...] = ()

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(name for name, value in self.memberships.items() if value)

    def verdict(self, name: str) -> bool | None:
        return self.conditions[name].convergent if name in self.conditions else None

    def violations(self) -> list[str]:
        """Implication arrows contradicted by conclusive verdicts."""
        found = []

        def equal(left: str, right: str) -> None:
            x, y = self.verdict(left), self.verdict(right)
            if x is not None and y is not None and x != y:
                found.append(f"({left}) <=> ({right})")

        def implies(left: str, right: str) -> None:
            x, y = self.verdict(left), self.verdict(right)
            if x is True and y is False:
                found.append(f"({left}) => ({right})")

        if self.conditions:
            equal("i", "i'")
            equal("iii", "iii'")
            if self.alpha < 2.0:
                equal("i'", "i''")
                equal("iii'", "iii''")
            else:
                implies("i'", "i''")
                implies("iii'", "iii''")
            implies("i", "iii")
            if self.diagonally_dominant:
                equal("i", "iii")
        m_hat, m = self.memberships.get(M_HAT), self.memberships.get(M)
        if m_hat is True and m is False:
            found.append("M_hat <= M")
        if 0.0 < self.alpha < 2.0 and None not in (m_hat, m) and m_hat != m:
            found.append("M_hat = M")
        f, f0 = self.memberships.get(F), self.memberships.get(F0)
        if f0 is True and f is False:
            found.append("F0 <= F")
        return found

    def as_dict(self) -> dict:
        return {
            "g": self.g_name,
            "alpha": self.alpha,
            "conditions": {name: verdict.as_dict() for name, verdict in self.conditions.items()},
            "limsups": {name: estimate.as_dict() for name, estimate in self.limsups.items()},
            "memberships": dict(self.memberships),
            "diagonally_dominant": self.diagonally_dominant,
            "one_directional": list(self.one_directional),
        }


def _check_hamiltonian(H: Hamiltonian, g: RegVarFunction) -> None:
    entry = vanishing_entry(H)
    if entry is not None:
        raise IndivisibleStart(
            message=f"{entry} vanishes near a={H.a}; the growth criteria need both diagonal entries.",
            payload={"entry": entry},
        )
    if g.alpha > 2.0:
        raise ParameterOutOfRange(f"The index of g must not exceed 2, got {g.alpha}.")
    if not g.unbounded:
        logger.warning(f"{g.name or 'g'} does not tend to infinity; class statements need g -> inf")


def _cutoff(H: Hamiltonian, a_prime: float | None) -> float:
    if a_prime is None:
        return solve_product_level(H, CUTOFF_PRODUCT)
    if not H.a < a_prime < H.b:
        raise DomainError(f"a'={a_prime} must lie in ({H.a}, {H.b}).")
    return a_prime


def _grid(H: Hamiltonian, a_prime: float, points: int = LIMSUP_POINTS) -> np.ndarray:
    return H.a + (a_prime - H.a) * np.geomspace(1.0, 10.0**-FG_DECADES, points)


def _dominance(H: Hamiltonian, ts: np.ndarray) -> tuple[bool, LimsupEstimate]:
    primitive = H.primitive()
    ratios, gaps = [], []
    for t in ts:
        m1, m2, m3 = primitive.values(t)
        ratio = m3 * m3 / (m1 * m2)
        ratios.append(ratio)
        gaps.append(1.0 - ratio)
    scales = 1.0 / (ts - H.a)
    estimate = limsup_estimate(ratios, scales, name="m3^2/(m1 m2)")
    gap = limsup_estimate(gaps, scales, name="1 - m3^2/(m1 m2)")
    dominant = estimate.limsup < 1.0 - DOMINANCE_MARGIN and gap.behaviour != VANISHING
    return dominant, estimate


def _kac_integrands(H: Hamiltonian, g: RegVarFunction) -> dict[str, Callable[[float], float]]:
    primitive = H.primitive()

    def state(t: float) -> tuple[float, ...]:
        h1, h2, h3 = H.entries(t)
        m1, m2, m3 = primitive.values(t)
        product = m1 * m2
        derivative = h1 * m2 + h2 * m1
        r = product**-0.5
        weight = (h1 * m2 * m2 - 2.0 * h3 * m2 * m3 + h2 * m3 * m3) / (m2 * m2)
        det = max(product - m3 * m3, 0.0)
        return h1, m1, m2, product, derivative, r, weight, det

    def condition_i(t: float) -> float:
        h1, _, _, _, _, r, _, _ = state(t)
        return h1 * g_star(g, max(r, 1.0))

    def condition_i_prime(t: float) -> float:
        _, m1, _, product, derivative, r, _, _ = state(t)
        return m1 * derivative / (product * product * g(r))

    def condition_i_second(t: float) -> float:
        h1, _, _, product, _, r, _, _ = state(t)
        return h1 / (product * g(r))

    def condition_iii(t: float) -> float:
        *_, r, weight, _ = state(t)
        return weight * g_star(g, max(r, 1.0))

    def condition_iii_prime(t: float) -> float:
        _, _, m2, product, derivative, r, _, det = state(t)
        return det / m2 * derivative / (product * product * g(r))

    def condition_iii_second(t: float) -> float:
        _, _, _, product, _, r, weight, _ = state(t)
        return weight / (product * g(r))

    return {
        "i": condition_i,
        "i'": condition_i_prime,
        "i''": condition_i_second,
        "iii": condition_iii,
        "iii'": condition_iii_prime,
        "iii''": condition_iii_second,
    }


def _first_conclusive(*verdicts: ConvergenceVerdict) -> bool | None:
    for verdict in verdicts:
        if verdict.convergent is not None:
            return verdict.convergent
    return None


def kac_criterion(
    H: Hamiltonian,
    g: RegVarFunction,
    a_prime: float | None = None,
    *,
    strict: bool = False,
    decades: int = DEFAULT_DECADES,
) -> GrowthClassReport:
    """Integrability conditions on H deciding whether mu_H lies in M_hat_g and M_g."""
    _check_hamiltonian(H, g)
    a_prime = _cutoff(H, a_prime)
    conditions = {
        name: endpoint_integral(
            integrand, H.a, a_prime, breakpoints=H.breakpoints, decades=decades, strict=strict, name=name
        )
        for name, integrand in _kac_integrands(H, g).items()
    }
    dominant, dominance = _dominance(H, _grid(H, a_prime))

    first = _first_conclusive(conditions["i"], conditions["i'"])
    third = _first_conclusive(conditions["iii"], conditions["iii'"])
    if dominant and first is None:
        first = third
    if dominant and third is None:
        third = first

    if first is True:
        m_hat = True
    elif third is False:
        m_hat = False
    elif dominant:
        m_hat = first
    else:
        m_hat = None

    if 0.0 < g.alpha < 2.0:
        m = m_hat
    else:
        m = True if m_hat else None

    one_directional = []
    if g.alpha == 2.0:
        one_directional += ["i' => i''", "iii' => iii''"]
    if g.alpha in (0.0, 2.0):
        one_directional.append("M_hat => M")
    report = GrowthClassReport(
        g_name=g.name,
        alpha=g.alpha,
        conditions=conditions,
        limsups={"dominance": dominance},
        memberships={M_HAT: m_hat, M: m},
        diagonally_dominant=dominant,
        one_directional=tuple(one_directional),
    )
    violations = report.violations()
    if violations:
        logger.warning(f"Kac criterion for {H.name or type(H).__name__}: verdicts contradict {violations}")
    logger.info(f"Kac criterion for {H.name or type(H).__name__} with {g.name}: M_hat={m_hat}, M={m}")
    return report


def fg_criterion(
    H: Hamiltonian,
    g: RegVarFunction,
    a_prime: float | None = None,
    *,
    strict: bool = False,
    points: int = LIMSUP_POINTS,
) -> GrowthClassReport:
    """limsup conditions on H deciding whether mu_H lies in F_g and F0_g."""
    _check_hamiltonian(H, g)
    a_prime = _cutoff(H, a_prime)
    ts = _grid(H, a_prime, points)
    primitive = H.primitive()
    ratio1, ratio2, det_side = [], [], []
    for t in ts:
        m1, m2, m3 = primitive.values(t)
        product = m1 * m2
        scale = product * g(product**-0.5)
        det = max(product - m3 * m3, 0.0)
        ratio1.append(m1 / scale)
        ratio2.append(det / m2 / scale)
        det_side.append(det / product)
    scales = 1.0 / (ts - H.a)
    first = limsup_estimate(ratio1, scales, name="m1/((m1 m2) g)")
    second = limsup_estimate(ratio2, scales, name="(det M/m2)/((m1 m2) g)")
    side = limsup_estimate(det_side, scales, name="det M/(m1 m2)")
    dominant, dominance = _dominance(H, ts)
    converse = g.alpha < 2.0

    if first.finite:
        f = True
    elif converse and not second.finite:
        f = False
    elif dominant and converse:
        f = False
    else:
        f = None

    if first.vanishes:
        f0 = True
    elif converse and not second.vanishes:
        f0 = False
    elif dominant and converse:
        f0 = False
    else:
        f0 = None

    report = GrowthClassReport(
        g_name=g.name,
        alpha=g.alpha,
        limsups={"m1_side": first, "det_side": second, "det_over_product": side, "dominance": dominance},
        memberships={F: f, F0: f0},
        diagonally_dominant=dominant,
        one_directional=() if converse else ("F_g converse needs alpha < 2",),
    )
    if f is None and f0 is None:
        logger.warning(f"F_g criterion for {H.name or type(H).__name__}: no membership decided")
        if strict:
            raise InconclusiveNearEndpoint(
                message="The limsup estimates decide neither F_g nor F0_g.",
                payload=report.as_dict(),
            )
    logger.info(f"F_g criterion for {H.name or type(H).__name__} with {g.name}: F={f}, F0={f0}")
    return report


@dataclass(frozen=True)
class WinklerClassification:
    case: str
    rho1: float
    rho2: float
    gamma0: float
    limsup_m3: float | None = None


def _leading(terms) -> tuple[float, float] | None:
    for c, rho in terms:
        if abs(c) > 0.0:
            return c, rho
    return None


def _combine(terms) -> list[tuple[float, float]]:
    merged: dict[float, float] = {}
    for c, rho in terms:
        key = round(rho, 12)
        merged[key] = merged.get(key, 0.0) + c
    largest = max((abs(c) for c, _ in terms), default=0.0)
    return [(c, rho) for rho, c in sorted(merged.items()) if abs(c) > EXPONENT_TOLERANCE * largest]


def winkler_threshold(H: Hamiltonian) -> WinklerClassification:
    """gamma0 with mu_H in M_{r^gamma} iff gamma > gamma0, for power primitives.

    Distinct leading exponents, and equal exponents with c3^2 < c1 c2, give
    gamma0 = 2 rho2 / (rho1 + rho2). A rank one start c3^2 = c1 c2 is rotated:
    c2 m1 + c1 m2 - 2 c3 m3 must lead with a positive multiple of t^kappa.
    """
    terms = H.power_terms()
    if terms is None:
        raise NotSupported("The threshold classification needs a power primitive.")
    lead1, lead2 = _leading(terms[0]), _leading(terms[1])
    if lead1 is None or lead2 is None:
        raise IndivisibleStart("A diagonal entry of the primitive vanishes identically.")
    (c1, rho1), (c2, rho2) = lead1, lead2
    if abs(rho1 - rho2) > EXPONENT_TOLERANCE:
        result = WinklerClassification("distinct", rho1, rho2, 2.0 * rho2 / (rho1 + rho2))
    else:
        c3 = sum(c for c, rho in terms[2] if abs(rho - rho1) <= EXPONENT_TOLERANCE)
        if c3 * c3 < c1 * c2 * (1.0 - EXPONENT_TOLERANCE):
            result = WinklerClassification("equal", rho1, rho2, 1.0, limsup_m3=c3 * c3 / (c1 * c2))
        else:
            rotated = _combine(
                [(c2 * c, rho) for c, rho in terms[0]]
                + [(c1 * c, rho) for c, rho in terms[1]]
                + [(-2.0 * c3 * c, rho) for c, rho in terms[2]]
            )
            lead = _leading(rotated)
            if lead is None or lead[0] <= 0.0 or lead[1] <= rho1:
                raise NeedsMoreInformation(
                    message="The rotated primitive does not lead with a positive power beyond the common exponent.",
                    payload={"rotated": rotated},
                )
            kappa = lead[1]
            result = WinklerClassification("rank_one", kappa, rho1, 2.0 * rho1 / (kappa + rho1))
    logger.info(f"Threshold for {H.name or type(H).__name__}: {result.case}, gamma0={result.gamma0:.6g}")
    return result


def _tilde_density(mu: SyntheticMeasure, r: float) -> float:
    total = 0.0
    for piece in mu.all_densities:
        if piece.lo <= r < piece.hi:
            total += piece.density(r)
        if piece.lo <= -r < piece.hi and r > 0.0:
            total += piece.density(-r)
    return total


def _measure_breakpoints(mu: SyntheticMeasure) -> Callable[[float, float], list[float]]:
    edges = sorted({abs(x) for piece in mu.all_densities for x in (piece.lo, piece.hi) if math.isfinite(x)})
    return lambda lo, hi: [x for x in edges if lo < x < hi]


def measure_class_report(
    mu: SyntheticMeasure,
    g: RegVarFunction,
    *,
    r_max: float = 1e8,
    decades: int = DEFAULT_DECADES,
    strict: bool = False,
) -> GrowthClassReport:
    """M_g, M_hat_g, F_g and F0_g decided directly from a synthetic measure."""
    if g.alpha > 2.0:
        raise ParameterOutOfRange(f"The index of g must not exceed 2, got {g.alpha}.")
    breakpoints = _measure_breakpoints(mu)
    atoms = math.fsum(mass / g(abs(t)) for t, mass in mu.all_atoms if abs(t) >= 1.0)
    kac = tail_integral(
        lambda r: _tilde_density(mu, r) / g(r), 1.0, breakpoints=breakpoints, decades=decades, strict=strict, name="M_g"
    )
    hat = tail_integral(
        lambda r: double_arrow(mu, r) * g_star(g, r) / r**3,
        1.0,
        breakpoints=breakpoints,
        decades=decades,
        strict=strict,
        name="M_hat_g",
    )
    log_weight = tail_integral(
        lambda r: double_arrow(mu, r) / (r * g(r)),
        1.0,
        breakpoints=breakpoints,
        decades=decades,
        strict=strict,
        name="double_arrow/(r g)",
    )
    rs = np.geomspace(1.0, r_max, LIMSUP_POINTS)
    tail = limsup_estimate([double_arrow(mu, r) / g(r) for r in rs], rs, name="double_arrow/g")
    m = None if kac.convergent is None else (kac.convergent and math.isfinite(atoms))
    report = GrowthClassReport(
        g_name=g.name,
        alpha=g.alpha,
        conditions={"M_g": kac, "M_hat_g": hat, "double_arrow/(r g)": log_weight},
        limsups={"double_arrow/g": tail},
        memberships={M_HAT: hat.convergent, M: m, F: tail.finite, F0: tail.vanishes},
    )
    logger.info(f"Measure classes of {mu.name or 'mu'} for {g.name}: {report.memberships}")
    return report


@dataclass(frozen=True)
class InclusionChainReport:
    g1: str
    g2: str
    chain: tuple[tuple[str, bool | None], ...]
    broken: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.broken


def inclusion_chain_check(mu: SyntheticMeasure, g1: RegVarFunction, g2: RegVarFunction, **kwargs) -> InclusionChainReport:
    """M_g1 in F0_g1 in F_g1 in M_hat_g2 in M_g2 for non-decreasing g1, g2 with alpha1 < alpha2."""
    if not (g1.non_decreasing and g2.non_decreasing):
        raise ParameterOutOfRange("The inclusion chain needs non-decreasing comparison functions.")
    if not g1.alpha < g2.alpha <= 2.0:
        raise ParameterOutOfRange(f"Need alpha1 < alpha2 <= 2, got {g1.alpha} and {g2.alpha}.")
    first = measure_class_report(mu, g1, **kwargs)
    second = measure_class_report(mu, g2, **kwargs)
    chain = (
        (f"M[{g1.name}]", first.memberships[M]),
        (f"F0[{g1.name}]", first.memberships[F0]),
        (f"F[{g1.name}]", first.memberships[F]),
        (f"M_hat[{g2.name}]", second.memberships[M_HAT]),
        (f"M[{g2.name}]", second.memberships[M]),
    )
    broken = []
    for index, (name, value) in enumerate(chain):
        if value is not True:
            continue
        for later, later_value in chain[index + 1 :]:
            if later_value is False:
                broken.append(f"{name} <= {later}")
    if broken:
        logger.warning(f"Inclusion chain broken for {mu.name or 'mu'}: {broken}")
    return InclusionChainReport(g1=g1.name, g2=g2.name, chain=chain, broken=tuple(broken))


def flip_check(H: Hamiltonian, gammas: Sequence[float], **kwargs) -> dict[float, tuple[bool | None, bool | None]]:
    """(M, F0) verdicts of kac_criterion and fg_criterion for g = r**gamma."""
    result = {}
    for gamma in gammas:
        g = RegVarFunction.power_function(gamma)
        result[gamma] = (kac_criterion(H, g, **kwargs).memberships[M], fg_criterion(H, g).memberships[F0])
    return result
