from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from core.errors import BracketError, DomainError, IVPFailure, PotentialTooLarge
from mainapps.estimator.bounds import solve_product_level
from mainapps.estimator.constants import abs_constant, check_q
from mainapps.hamiltonians.hamiltonian import DiagonalHamiltonian, Interval
from mainapps.weyl_solver.solver import weyl_coefficient


logger = logging.getLogger(__name__)


NEIGHBOURHOOD_BOUND = 1.0 / 3.0
SEED_HALVINGS = 60
V_LOWER, V_UPPER = 0.5, 1.5
V_SAMPLES = 200
IVP_RTOL = 1e-10
IVP_ATOL = 1e-12
B_AGREEMENT = 1e-6


@dataclass(frozen=True)
class SLProblem:
    """-(p y')' + q y = lambda w y on [a, b), limit point at b.

    ``potential`` is q; None means q = 0. A potential supported in
    [a, support_end) with p = w = 1 beyond it admits the Dirichlet oracle.
    """

    p: Callable[[float], float]
    w: Callable[[float], float]
    potential: Callable[[float], float] | None = None
    interval: Interval = Interval(0.0)
    lambda0: float | None = None
    x0: float = 0.5
    breaks: tuple[float, ...] = ()
    support_end: float | None = None
    name: str = ""

    @property
    def a(self) -> float:
        return self.interval.a

    @property
    def has_potential(self) -> bool:
        return self.potential is not None

    def q(self, x: float) -> float:
        return 0.0 if self.potential is None else float(self.potential(x))

    def hamiltonian(self) -> DiagonalHamiltonian:
        """diag(w, 1/p), whose Weyl coefficient gives q_D(z**2) = z q_H(z) when q = 0."""
        return DiagonalHamiltonian(
            self.interval, self.w, lambda x: 1.0 / self.p(x), limit_point=True, jumps=self.breaks, name=self.name
        )

    def _integral(self, fn: Callable[[float], float], x: float) -> float:
        if x <= self.a:
            return 0.0
        points = [p for p in self.breaks if self.a < p < x] or None
        value, _ = integrate.quad(fn, self.a, x, points=points, limit=400, epsabs=0.0, epsrel=1e-12)
        return float(value)

    def weight_integral(self, x: float) -> float:
        return self._integral(self.w, x)

    def inverse_p_integral(self, x: float) -> float:
        return self._integral(lambda t: 1.0 / self.p(t), x)

    def shifted_potential_integral(self, x: float, lambda0: float) -> float:
        """integral of |q - lambda0 w| over [a, x]."""
        return self._integral(lambda t: abs(self.q(t) - lambda0 * self.w(t)), x)

    @classmethod
    def free(cls) -> "SLProblem":
        one = lambda x: 1.0
        return cls(p=one, w=one, support_end=0.0, name="free")

    @classmethod
    def bump(
        cls, height: float = 1.0, width: float = 1.0, *, start: float = 1.0, lambda0: float = -1.0, x0: float = 0.5
    ) -> "SLProblem":
        """p = w = 1 and q = height on [start, start + width)."""
        if width <= 0.0:
            raise DomainError("The bump needs a positive width.")
        end = start + width
        one = lambda x: 1.0
        return cls(
            p=one,
            w=one,
            potential=lambda x: height if start <= x < end else 0.0,
            lambda0=lambda0,
            x0=x0,
            breaks=(start, end),
            support_end=end,
            name=f"bump({height:g},{width:g})",
        )

    @classmethod
    def from_config(cls, data: dict) -> "SLProblem":
        kind = data.get("kind", "free")
        if kind == "free":
            return cls.free()
        if kind == "bump":
            return cls.bump(
                float(data.get("height", 1.0)),
                float(data.get("width", 1.0)),
                start=float(data.get("start", 1.0)),
                lambda0=float(data.get("lambda0", -1.0)),
                x0=float(data.get("x0", 0.5)),
            )
        raise DomainError(f"Unknown Sturm-Liouville problem kind {kind!r}.")


def sl_constants(kappa: float, theta: float) -> tuple[float, float]:
    """(C1, C2) at angle theta in (0, 2 pi); C2 is the absolute constant at 2 kappa and theta/2."""
    check_q(2.0 * kappa)
    if not 0.0 < theta < 2.0 * math.pi:
        raise DomainError(f"theta={theta} must lie in (0, 2 pi).")
    upper = abs_constant(2.0 * kappa, theta / 2.0)
    return 1.0 / upper, upper


def x_hat(prob: SLProblem, r: float, kappa: float) -> float:
    """The x with integral of w times integral of 1/p over [a, x] equal to kappa**2 / r."""
    return solve_product_level(prob.hamiltonian(), kappa * kappa / r)


def b_function(prob: SLProblem, r: float, kappa: float) -> tuple[float, float]:
    """Both forms (r/kappa) int w and kappa / int 1/p at x_hat(r)."""
    x = x_hat(prob, r, kappa)
    first = r / kappa * prob.weight_integral(x)
    second = kappa / prob.inverse_p_integral(x)
    if abs(first - second) > B_AGREEMENT * max(abs(first), abs(second)):
        logger.warning(f"B({r:.4g}) forms disagree: {first:.10g} vs {second:.10g}")
    return first, second


def free_m_function(prob: SLProblem, lam: complex, eps: float | None = None) -> complex:
    """q_D(lam) for q = 0 through the canonical system, q_D(z**2) = z q_H(z) with Im z > 0."""
    if prob.has_potential:
        raise DomainError("The canonical-system route needs q = 0.")
    z = np.sqrt(complex(lam))
    if z.imag < 0.0:
        z = -z
    return complex(z * weyl_coefficient(prob.hamiltonian(), z, eps).value)


def dirichlet_m_function(prob: SLProblem, lam: complex, *, rtol: float = IVP_RTOL) -> complex:
    """q_D(lam) = (p psi')(a) / psi(a) with psi = exp(i k x) beyond the support, k**2 = lam, Im k > 0."""
    if prob.support_end is None:
        raise DomainError("The Dirichlet oracle needs a compactly supported potential.")
    lam = complex(lam)
    if lam.imag == 0.0:
        raise DomainError("The Dirichlet oracle is evaluated off the real axis.")
    k = np.sqrt(lam)
    if k.imag < 0.0:
        k = -k
    end = max(prob.support_end, prob.a)
    state = np.array([np.exp(1j * k * end), 1j * k * np.exp(1j * k * end)], dtype=complex)

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        return np.array([y[1] / prob.p(x), (prob.q(x) - lam * prob.w(x)) * y[0]], dtype=complex)

    edges = sorted({end, prob.a, *(p for p in prob.breaks if prob.a < p < end)}, reverse=True)
    for upper, lower in zip(edges[:-1], edges[1:]):
        scale = float(np.max(np.abs(state)))
        solution = integrate.solve_ivp(
            rhs, (upper, lower), state, method="DOP853", rtol=rtol, atol=IVP_ATOL * scale
        )
        if not solution.success:
            raise IVPFailure(
                message=f"Backward integration failed on [{lower}, {upper}]: {solution.message}",
                payload={"lambda": str(lam)},
            )
        state = solution.y[:, -1]
    if state[0] == 0.0:
        raise IVPFailure(f"psi vanishes at a for lambda={lam}.")
    return complex(state[1] / state[0])


@dataclass(frozen=True)
class NeumannSolution:
    x0: float
    v: Callable[[float], float]
    v_min: float
    v_max: float


def _neighbourhood(prob: SLProblem, lambda0: float, seed: float) -> float:
    x0 = min(seed, prob.interval.b) if math.isfinite(prob.interval.b) else seed
    for _ in range(SEED_HALVINGS):
        if (
            prob.inverse_p_integral(x0) <= NEIGHBOURHOOD_BOUND
            and prob.shifted_potential_integral(x0, lambda0) <= NEIGHBOURHOOD_BOUND
        ):
            return x0
        x0 = prob.a + 0.5 * (x0 - prob.a)
    raise PotentialTooLarge(
        message=f"No x0 below {seed} keeps both neighbourhood integrals at most 1/3.",
        payload={"seed": seed, "lambda0": lambda0},
    )


def neumann_solution(prob: SLProblem, lambda0: float, x0: float) -> NeumannSolution:
    """v with -(p v')' + q v = lambda0 w v, v(a) = 1, (p v')(a) = 0, on [a, x0]."""

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        return np.array([y[1] / prob.p(x), (prob.q(x) - lambda0 * prob.w(x)) * y[0]])

    solution = integrate.solve_ivp(
        rhs, (prob.a, x0), [1.0, 0.0], method="DOP853", rtol=IVP_RTOL, atol=IVP_ATOL, dense_output=True
    )
    if not solution.success:
        raise IVPFailure(message=f"Neumann initial value problem failed: {solution.message}", payload={"x0": x0})
    samples = solution.sol(np.linspace(prob.a, x0, V_SAMPLES))[0]
    v_min, v_max = float(samples.min()), float(samples.max())
    if v_min < V_LOWER - 1e-9 or v_max > V_UPPER + 1e-9:
        raise IVPFailure(
            message=f"v leaves [1/2, 3/2] on [{prob.a}, {x0}]: range [{v_min:.6g}, {v_max:.6g}].",
            payload={"v_min": v_min, "v_max": v_max},
        )
    return NeumannSolution(x0=x0, v=lambda x: float(solution.sol(x)[0]), v_min=v_min, v_max=v_max)


@dataclass(frozen=True)
class SLEnvelope:
    r: float
    theta: float
    kappa: float
    x_hat: float
    B: float
    B_alt: float
    lower: float
    upper: float
    value: float | None = None
    lambda0: float | None = None
    x0: float | None = None
    r0: float | None = None
    v_range: tuple[float, float] | None = None
    transformed: tuple[float, float] | None = None

    @property
    def in_range(self) -> bool:
        return self.r0 is None or self.r >= self.r0

    @property
    def ok(self) -> bool | None:
        if self.value is None:
            return None
        slack = 1e-9 * max(self.value, 1.0)
        inside = self.lower - slack <= self.value <= self.upper + slack
        if self.transformed is not None:
            low, high = self.transformed
            inside = inside and low - slack <= self.value <= high + slack
        return inside

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "theta": self.theta,
            "kappa": self.kappa,
            "x_hat": self.x_hat,
            "B": self.B,
            "lower": self.lower,
            "upper": self.upper,
            "value": self.value,
            "r0": self.r0,
            "transformed": list(self.transformed) if self.transformed else None,
            "ok": self.ok,
        }


def _transformed_bounds(
    prob: SLProblem, neumann: NeumannSolution, r: float, kappa: float, c1: float, c2: float
) -> tuple[float, float] | None:
    def integrals(x: float) -> tuple[float, float]:
        points = [p for p in prob.breaks if prob.a < p < x] or None
        W, _ = integrate.quad(lambda t: neumann.v(t) ** 2 * prob.w(t), prob.a, x, points=points, limit=400)
        P, _ = integrate.quad(lambda t: 1.0 / (neumann.v(t) ** 2 * prob.p(t)), prob.a, x, points=points, limit=400)
        return W, P

    level = kappa * kappa / r
    W, P = integrals(neumann.x0)
    if W * P < level:
        logger.debug(f"x~({r:.4g}) lies beyond x0={neumann.x0}; no transformed envelope")
        return None
    try:
        x = optimize.brentq(lambda t: math.prod(integrals(t)) - level, prob.a + 1e-300, neumann.x0, xtol=1e-15)
    except ValueError as exc:
        raise BracketError(f"No x~ for r={r}.") from exc
    B = r / kappa * integrals(x)[0]
    return c1 * B, c2 * B


def sl_envelope(
    prob: SLProblem,
    r: float,
    theta: float,
    kappa: float,
    *,
    measure: bool = True,
    eps: float | None = None,
) -> SLEnvelope:
    """Two-sided bound on |q_D| with the measured value next to it.

    Without potential the bound is C1 B(r) <= |q_D(r e^{i theta})| <= C2 B(r).
    With potential it is C1/36 B(9r) <= |q_D(lambda0 + r e^{i theta})| <= 9 C2/4 B(9r)
    for r >= r0, and the exact envelope built from v**2 p and v**2 w is added
    whenever x~(r) stays within [a, x0].
    """
    if r <= 0.0:
        raise DomainError(f"r must be positive, got {r}.")
    c1, c2 = sl_constants(kappa, theta)
    lam = r * complex(math.cos(theta), math.sin(theta))
    if not prob.has_potential:
        x = x_hat(prob, r, kappa)
        B, B_alt = b_function(prob, r, kappa)
        value = abs(free_m_function(prob, lam, eps)) if measure else None
        envelope = SLEnvelope(r, theta, kappa, x, B, B_alt, c1 * B, c2 * B, value)
    else:
        if prob.lambda0 is None:
            raise DomainError("The potential case needs lambda0 below the Neumann spectrum.")
        lambda0 = prob.lambda0
        x0 = _neighbourhood(prob, lambda0, prob.x0)
        neumann = neumann_solution(prob, lambda0, x0)
        r0 = 9.0 * kappa * kappa / (prob.weight_integral(x0) * prob.inverse_p_integral(x0))
        x = x_hat(prob, 9.0 * r, kappa)
        B, B_alt = b_function(prob, 9.0 * r, kappa)
        value = abs(dirichlet_m_function(prob, lambda0 + lam)) if measure else None
        envelope = SLEnvelope(
            r,
            theta,
            kappa,
            x,
            B,
            B_alt,
            c1 / 36.0 * B,
            9.0 * c2 / 4.0 * B,
            value,
            lambda0=lambda0,
            x0=x0,
            r0=r0,
            v_range=(neumann.v_min, neumann.v_max),
            transformed=_transformed_bounds(prob, neumann, r, kappa, c1, c2),
        )
        if not envelope.in_range:
            logger.warning(f"r={r:.4g} lies below r0={r0:.4g}; the potential envelope is not guaranteed")
    if envelope.ok is False:
        logger.warning(f"Sturm-Liouville envelope violated at r={r:.4g}, theta={theta:.4g}: {envelope.as_dict()}")
    return envelope
