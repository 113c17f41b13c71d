from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from core.errors import BracketError, IndivisibleStart, InvalidBracket, ParameterOutOfRange
from mainapps.hamiltonians.hamiltonian import Hamiltonian, PowerTerms, vanishing_entry
from mainapps.strings_sl.strings import string_from_hamiltonian
from mainapps.weyl_solver.solver import weyl_coefficient

from .constants import (
    Q_UPPER,
    _get_q,
    _get_root_tol,
    abs_constant,
    check_q,
    im_lower_constant,
    im_upper_constant,
    re_constant,
    sigma,
)


logger = logging.getLogger(__name__)


DEFAULT_ANGLES = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)
BRACKET_STEPS = 2000
CANCELLATION = 1e-12
FORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EstimatorConfig:
    q: float = 0.2
    root_tol: float = 1e-10

    def __post_init__(self) -> None:
        check_q(self.q)
        if not self.root_tol > 0.0:
            raise ParameterOutOfRange(f"root_tol must be positive, got {self.root_tol}.")

    @property
    def sigma(self) -> float:
        return sigma(self.q)

    @classmethod
    def from_settings(cls, **overrides) -> "EstimatorConfig":
        values = {"q": _get_q(), "root_tol": _get_root_tol()}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


def _config(cfg: EstimatorConfig | None) -> EstimatorConfig:
    return cfg if cfg is not None else EstimatorConfig.from_settings()


def _combine(terms: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: dict[float, list[float]] = {}
    for c, rho in terms:
        merged.setdefault(round(rho, 12), []).append(c)
    result = []
    for rho, parts in sorted(merged.items()):
        total = math.fsum(parts)
        if abs(total) > CANCELLATION * max(abs(c) for c in parts):
            result.append((total, rho))
    return result


def _det_terms(terms: tuple[PowerTerms, PowerTerms, PowerTerms]) -> list[tuple[float, float]]:
    m1, m2, m3 = terms
    products = [(c1 * c2, r1 + r2) for c1, r1 in m1 for c2, r2 in m2]
    products += [(-c3 * c4, r3 + r4) for c3, r3 in m3 for c4, r4 in m3]
    return _combine(products)


def det_primitive(H: Hamiltonian, t: float) -> float:
    """det M(t), with the leading cancellation done on exponents for power primitives."""
    terms = H.power_terms()
    if terms is not None:
        u = t - H.a
        return max(0.0, math.fsum(c * u**rho for c, rho in _det_terms(terms)))
    m1, m2, m3 = H.primitive().values(t)
    return max(0.0, m1 * m2 - m3 * m3)


def _check_start(H: Hamiltonian) -> None:
    entry = vanishing_entry(H)
    if entry is not None:
        raise IndivisibleStart(
            message=f"{entry} vanishes right after a={H.a}; split the indivisible prefix first.",
            payload={"entry": entry, "hamiltonian": H.name},
        )


def solve_product_level(H: Hamiltonian, level: float, *, root_tol: float | None = None) -> float:
    """The t with (m1 m2)(t) = level, by bisection in u = t - a."""
    if not level > 0.0:
        raise ParameterOutOfRange(f"level must be positive, got {level}.")
    _check_start(H)
    tol = _get_root_tol() if root_tol is None else root_tol
    primitive = H.primitive()

    def excess(u: float) -> float:
        m1, m2, _ = primitive.values(H.a + u)
        return m1 * m2 - level

    width = H.b - H.a
    hi = min(1.0, 0.5 * width) if math.isfinite(width) else 1.0
    for _ in range(BRACKET_STEPS):
        if excess(hi) >= 0.0:
            break
        if math.isfinite(width):
            if hi >= width:
                raise BracketError(
                    message=f"(m1 m2) stays below {level:.3e} on [{H.a}, {H.b}).",
                    payload={"level": level, "b": H.b},
                )
            hi = min(2.0 * hi, width)
        else:
            hi *= 2.0
            if hi > 1e300:
                raise BracketError(f"(m1 m2) stays below {level:.3e} on [{H.a}, inf).")
    lo = hi
    for _ in range(BRACKET_STEPS):
        lo *= 0.5
        if excess(lo) < 0.0:
            break
    else:
        raise BracketError(f"(m1 m2) does not fall below {level:.3e} near a={H.a}.")
    if excess(hi) == 0.0:
        return H.a + hi
    u = optimize.bisect(excess, lo, hi, xtol=1e-300, rtol=max(0.1 * tol, 1e-15), maxiter=2000)
    return H.a + u


def t_crit(H: Hamiltonian, r: float, cfg: EstimatorConfig | None = None) -> float:
    """t_hat(r): the point with (m1 m2)(t_hat) = q^2 / (4 r^2)."""
    cfg = _config(cfg)
    if not r > 0.0:
        raise ParameterOutOfRange(f"r must be positive, got {r}.")
    t_hat = solve_product_level(H, cfg.q * cfg.q / (4.0 * r * r), root_tol=cfg.root_tol)
    logger.debug(f"t_crit({H.name or type(H).__name__}, r={r:.6g}) = {t_hat:.12g}")
    return t_hat


def r_hat(H: Hamiltonian, t: float, cfg: EstimatorConfig | None = None) -> float:
    """Inverse of t_crit: (q/2) (m1 m2)(t)^(-1/2)."""
    cfg = _config(cfg)
    m1, m2, _ = H.primitive().values(t)
    product = m1 * m2
    if product <= 0.0:
        return math.inf
    return 0.5 * cfg.q / math.sqrt(product)


@dataclass(frozen=True)
class AngleEnvelope:
    theta: float
    lower_abs: float
    upper_abs: float
    upper_re: float
    lower_im: float
    upper_im: float

    def slacks(self, value: complex, eps: float = 0.0) -> dict[str, float]:
        """Signed distances to each inequality, non-negative when it holds within eps."""
        return {
            "lower_abs": abs(value) - self.lower_abs + eps,
            "upper_abs": self.upper_abs + eps - abs(value),
            "upper_re": self.upper_re + eps - abs(value.real),
            "lower_im": value.imag - self.lower_im + eps,
            "upper_im": self.upper_im + eps - value.imag,
        }

    def slack(self, value: complex, eps: float = 0.0) -> float:
        return min(self.slacks(value, eps).values())

    def check(self, value: complex, eps: float = 0.0) -> bool:
        return self.slack(value, eps) >= 0.0

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "lower_abs": self.lower_abs,
            "upper_abs": self.upper_abs,
            "upper_re": self.upper_re,
            "lower_im": self.lower_im,
            "upper_im": self.upper_im,
        }


def envelope(A: float, L: float, theta: float, q: float, *, A_upper: float | None = None) -> AngleEnvelope:
    if not 0.0 < theta < math.pi:
        raise ParameterOutOfRange(f"theta={theta} must lie in (0, pi).")
    upper = A if A_upper is None else A_upper
    return AngleEnvelope(
        theta=theta,
        lower_abs=A / abs_constant(q, theta),
        upper_abs=abs_constant(q, theta) * upper,
        upper_re=re_constant(q, theta) * upper,
        lower_im=im_lower_constant(q, theta) * L,
        upper_im=im_upper_constant(q, theta) * upper,
    )


@dataclass(frozen=True)
class EstimateBundle:
    r: float
    q: float
    t_crit: float
    A: float
    L: float
    m1: float
    m2: float
    m3: float
    det: float
    envelopes: dict[float, AngleEnvelope] = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        return sigma(self.q)

    def envelope(self, theta: float) -> AngleEnvelope:
        if theta not in self.envelopes:
            return envelope(self.A, self.L, theta, self.q)
        return self.envelopes[theta]


def estimate_bundle(
    H: Hamiltonian,
    r: float,
    angles: Sequence[float] = DEFAULT_ANGLES,
    cfg: EstimatorConfig | None = None,
) -> EstimateBundle:
    cfg = _config(cfg)
    t_hat = t_crit(H, r, cfg)
    m1, m2, m3 = H.primitive().values(t_hat)
    if m2 <= 0.0 or m1 <= 0.0:
        raise IndivisibleStart(
            message=f"m1 or m2 vanishes at t_hat={t_hat}.",
            payload={"m1": m1, "m2": m2},
        )
    det = det_primitive(H, t_hat)
    A = math.sqrt(m1 / m2)
    L = A * det / (m1 * m2)
    bundle = EstimateBundle(
        r=r,
        q=cfg.q,
        t_crit=t_hat,
        A=A,
        L=L,
        m1=m1,
        m2=m2,
        m3=m3,
        det=det,
        envelopes={theta: envelope(A, L, theta, cfg.q) for theta in angles},
    )
    logger.debug(f"Estimate at r={r:.6g}: t_hat={t_hat:.6g}, A={A:.6g}, L={L:.6g}")
    return bundle


def alternative_forms(bundle: EstimateBundle) -> dict[str, float]:
    """A and L recomputed from their alternative representations."""
    r, q = bundle.r, bundle.q
    return {
        "A_from_m1": 2.0 * r / q * bundle.m1,
        "A_from_m2": q / (2.0 * r) / bundle.m2,
        "L_from_det": 2.0 / q * r * bundle.det / bundle.m2,
        "L_from_A": 4.0 / (q * q) * r * r * bundle.det * bundle.A,
    }


def forms_consistent(bundle: EstimateBundle, tolerance: float = FORM_TOLERANCE) -> bool:
    forms = alternative_forms(bundle)
    checks = [
        (forms["A_from_m1"], bundle.A),
        (forms["A_from_m2"], bundle.A),
        (forms["L_from_det"], bundle.L),
        (forms["L_from_A"], bundle.L),
    ]
    return all(abs(x - y) <= tolerance * max(abs(y), 1e-300) for x, y in checks)


@dataclass(frozen=True)
class BracketBounds:
    r: float
    t_lo: float
    t_hi: float
    A_lower: float
    A_upper: float
    L_lower: float
    L_upper: float
    envelope: AngleEnvelope

    def contains(self, bundle: EstimateBundle, tolerance: float = 1e-12) -> bool:
        slack = tolerance * max(bundle.A, bundle.L, 1.0)
        return (
            self.A_lower - slack <= bundle.A <= self.A_upper + slack
            and self.L_lower - slack <= bundle.L <= self.L_upper + slack
        )


def bracket_bounds(
    H: Hamiltonian,
    r: float,
    t_hat_bracket: tuple[float, float],
    theta: float = math.pi / 2,
    cfg: EstimatorConfig | None = None,
) -> BracketBounds:
    """Bounds on A(r) and L(r) from t_lo < t_hat(r) < t_hi, and the envelope they imply."""
    cfg = _config(cfg)
    q = cfg.q
    t_lo, t_hi = t_hat_bracket
    if not H.a < t_lo < t_hi:
        raise InvalidBracket(f"Need a < t_lo < t_hi, got ({t_lo}, {t_hi}).")
    primitive = H.primitive()
    lo1, lo2, _ = primitive.values(t_lo)
    hi1, hi2, _ = primitive.values(t_hi)
    if r > r_hat(H, t_lo, cfg) * (1.0 + 1e-12):
        raise InvalidBracket(
            message=f"r={r} exceeds (q/2)(m1 m2)^(-1/2)(t_lo) = {r_hat(H, t_lo, cfg):.6g}.",
            payload={"r": r, "t_lo": t_lo},
        )
    if r < r_hat(H, t_hi, cfg) * (1.0 - 1e-12):
        raise InvalidBracket(
            message=f"t_hi={t_hi} lies left of t_hat({r}).",
            payload={"r": r, "t_hi": t_hi},
        )
    A_lower = max(2.0 / q * r * lo1, q / 2.0 / (r * hi2))
    A_upper = min(q / 2.0 / (r * lo2), 2.0 / q * r * hi1)
    L_lower = 2.0 / q * r * det_primitive(H, t_lo) / lo2
    L_upper = 2.0 / q * r * det_primitive(H, t_hi) / hi2
    result = BracketBounds(
        r=r,
        t_lo=t_lo,
        t_hi=t_hi,
        A_lower=A_lower,
        A_upper=A_upper,
        L_lower=L_lower,
        L_upper=L_upper,
        envelope=envelope(A_lower, L_lower, theta, q, A_upper=A_upper),
    )
    logger.debug(f"Bracket bounds at r={r:.6g}: A in [{A_lower:.6g}, {A_upper:.6g}], L in [{L_lower:.6g}, {L_upper:.6g}]")
    return result


@dataclass(frozen=True)
class ComparisonConstant:
    C: float
    q: float
    q1: float
    q2: float
    delta1: float
    delta2: float
    terms: tuple[float, float, float]

    def r0(self, H: Hamiltonian, H_tilde: Hamiltonian, a_prime: float) -> float:
        """max(r_hat_H(a'), r_hat_H~(a')), and 0 when a' = b."""
        if a_prime >= H.b:
            return 0.0
        cfg = EstimatorConfig(q=self.q)
        return max(r_hat(H, a_prime, cfg), r_hat(H_tilde, a_prime, cfg))


def _delta(q_i: float) -> float:
    return 2.0 / q_i / abs_constant(q_i)


def comparison_constant(c1: float, c2: float, gamma1: float, gamma2: float, q: float | None = None) -> ComparisonConstant:
    """C with |q_H(ir)| <= C |q_H~(ir)| for r > r0, given the trace and diagonal comparison constants."""
    q = _get_q() if q is None else q
    if min(c1, c2, gamma1, gamma2) <= 0.0:
        raise ParameterOutOfRange("Comparison constants must be positive.")
    q1 = q * math.sqrt(2.0 * c1 * gamma1)
    q2 = q * math.sqrt(2.0 * c2 * gamma2)
    if not 0.0 < q or max(q, q1, q2) >= Q_UPPER:
        raise ParameterOutOfRange(
            message=f"max(q, q1, q2) = {max(q, q1, q2):.6g} must lie below {Q_UPPER:.6f}.",
            payload={"q": q, "q1": q1, "q2": q2},
        )
    K = abs_constant(q)
    delta1, delta2 = _delta(q1), _delta(q2)
    terms = (gamma1 / delta2 * 2.0 / q * K, gamma2 / delta1 * 2.0 / q * K, K * K)
    result = ComparisonConstant(C=max(terms), q=q, q1=q1, q2=q2, delta1=delta1, delta2=delta2, terms=terms)
    logger.info(f"Comparison constant C={result.C:.6g} for c=({c1}, {c2}), gamma=({gamma1}, {gamma2}), q={q}")
    return result


def sampled_comparison_constants(
    H: Hamiltonian, H_tilde: Hamiltonian, a_prime: float, *, points: int = 200
) -> tuple[float, float, float, float]:
    """(c1, c2, gamma1, gamma2) as suprema of the defining ratios on a grid in (a, a')."""
    if H.a != H_tilde.a:
        raise InvalidBracket("Both Hamiltonians must start at the same point.")
    M, Mt = H.primitive(), H_tilde.primitive()
    c1 = c2 = gamma1 = gamma2 = 0.0
    for u in np.geomspace(1e-8, 1.0, points):
        t = H.a + u * (a_prime - H.a)
        m1, m2, _ = M.values(t)
        n1, n2, _ = Mt.values(t)
        c1 = max(c1, (m1 + m2) / (n1 + n2))
        c2 = max(c2, (n1 + n2) / (m1 + m2))
        gamma1 = max(gamma1, m1 / n1)
        gamma2 = max(gamma2, n2 / m2)
    return c1, c2, gamma1, gamma2


@dataclass(frozen=True)
class ComparisonReport:
    constant: ComparisonConstant
    r0: float
    rows: tuple[tuple[float, float, float, float], ...]

    @property
    def ok(self) -> bool:
        return all(abs_q <= self.constant.C * abs_q_tilde + eps for _, abs_q, abs_q_tilde, eps in self.rows)


def compare_weyl_coefficients(
    H: Hamiltonian,
    H_tilde: Hamiltonian,
    rs: Sequence[float],
    *,
    a_prime: float | None = None,
    q: float | None = None,
    eps: float | None = None,
) -> ComparisonReport:
    """Measured |q_H(ir)| against C |q_H~(ir)| on the solver."""
    if a_prime is None:
        a_prime = min(H.b, H.a + 1.0)
    sample_end = a_prime if math.isfinite(a_prime) else H.a + 1.0
    constants = sampled_comparison_constants(H, H_tilde, sample_end)
    constant = comparison_constant(*constants, q=q)
    r0 = constant.r0(H, H_tilde, a_prime)
    rows = []
    for r in rs:
        if r <= r0:
            logger.warning(f"r={r} lies below r0={r0:.6g}; skipped")
            continue
        value = weyl_coefficient(H, 1j * r, eps)
        value_tilde = weyl_coefficient(H_tilde, 1j * r, eps)
        slack = value.radius + constant.C * value_tilde.radius
        rows.append((r, abs(value.value), abs(value_tilde.value), slack))
    return ComparisonReport(constant=constant, r0=r0, rows=tuple(rows))


def a_via_string(H: Hamiltonian, r: float, cfg: EstimatorConfig | None = None) -> float:
    """(2r/q) f^-(q^2 / (4 r^2)) with f(x) = x m(x) for the string of H."""
    cfg = _config(cfg)
    _check_start(H)
    string = string_from_hamiltonian(H)
    value = string.f().inverse(cfg.q * cfg.q / (4.0 * r * r))
    return 2.0 * r / cfg.q * value
