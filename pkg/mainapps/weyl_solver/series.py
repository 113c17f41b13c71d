from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable

import numpy as np
from django.conf import settings
from scipy import integrate

from core.errors import ConfigurationError, DomainError, QuadratureError
from mainapps.hamiltonians.hamiltonian import J, Hamiltonian, Panel


logger = logging.getLogger(__name__)


MINUS_J = -J
ABS_J = np.abs(J)
ORDER_SLACK = 1e-10


def _get_series_cap() -> int:
    try:
        return int(getattr(settings, "CANONICAL_WEYL_SERIES_CAP", 10))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_SERIES_CAP must be an integer.") from exc


def entrywise_abs_order(U: np.ndarray, V: np.ndarray, tol: float = 0.0) -> bool:
    """U <= V entrywise, for real 2x2 matrices."""
    return bool(np.all(np.asarray(U) <= np.asarray(V) + tol))


@dataclass(frozen=True)
class SeriesCoefficients:
    t: float
    W: tuple[np.ndarray, ...]
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    exact: bool = True

    @property
    def order(self) -> int:
        return len(self.W) - 1

    def evaluate(self, z: complex) -> np.ndarray:
        return sum(Wn * z**n for n, Wn in enumerate(self.W))


def _betas(W: tuple[np.ndarray, ...]) -> np.ndarray:
    size = len(W)
    beta = np.zeros((size, size, 2, 2))
    for n in range(size):
        for m in range(size):
            beta[n, m] = W[n] @ J @ W[m].T
    return beta


def _integrate_poly(poly: np.ndarray, length: float) -> np.ndarray:
    """Integral over [0, length] of sum_j poly[j] u**j."""
    powers = np.array([length ** (j + 1) / (j + 1) for j in range(len(poly))])
    return np.tensordot(powers, poly, axes=1)


def _evaluate_poly(poly: np.ndarray, u: float) -> np.ndarray:
    powers = np.array([u**j for j in range(len(poly))])
    return np.tensordot(powers, poly, axes=1)


def poly_mul(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Product of two matrix polynomials stored as (degree + 1, 2, 2) arrays."""
    out = np.zeros((len(left) + len(right) - 1, 2, 2), dtype=np.result_type(left, right))
    for j, A in enumerate(left):
        for k, B in enumerate(right):
            out[j + k] += A @ B
    return out


def constant_poly(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=float)[None, :, :]


@dataclass
class PanelState:
    """Matrix polynomials of W_0..W_N in u = s - panel.start on one panel."""

    panel: Panel
    W: list[np.ndarray]
    M0: np.ndarray

    @property
    def H(self) -> np.ndarray:
        return self.panel.matrix

    def det_poly(self) -> np.ndarray:
        """det M(start + u) as a scalar polynomial times I."""
        M = np.stack([self.M0, self.panel.matrix])
        m1, m2, m3 = M[:, 0, 0], M[:, 1, 1], M[:, 0, 1]
        coefficients = np.array(
            [m1[0] * m2[0] - m3[0] ** 2, m1[0] * m2[1] + m1[1] * m2[0] - 2 * m3[0] * m3[1], m1[1] * m2[1] - m3[1] ** 2]
        )
        return coefficients[:, None, None] * np.eye(2)[None, :, :]


def walk_panels(
    H: Hamiltonian,
    t: float,
    N: int,
    integrands: dict[str, Callable[[PanelState], np.ndarray]] | None = None,
) -> tuple[tuple[np.ndarray, ...], dict[str, np.ndarray]]:
    """Exact W_0..W_N(t) for piecewise constant H, plus integrals of polynomial integrands."""
    values = [np.eye(2)] + [np.zeros((2, 2)) for _ in range(N)]
    totals = {name: np.zeros((2, 2)) for name in (integrands or {})}
    M0 = np.zeros((2, 2))
    for panel in H.panels(H.a, t):
        G = panel.matrix @ MINUS_J
        polys = [constant_poly(np.eye(2))]
        for n in range(1, N + 1):
            previous = polys[n - 1]
            poly = np.zeros((n + 1, 2, 2))
            poly[0] = values[n]
            for j, coefficient in enumerate(previous):
                poly[j + 1] = coefficient @ G / (j + 1)
            polys.append(poly)
        state = PanelState(panel=panel, W=polys, M0=M0)
        for name, integrand in (integrands or {}).items():
            totals[name] = totals[name] + _integrate_poly(integrand(state), panel.length)
        values = [_evaluate_poly(poly, panel.length) for poly in polys]
        M0 = M0 + panel.matrix * panel.length
    return tuple(values), totals


def _alpha_integrands(N: int) -> dict[str, Callable[[PanelState], np.ndarray]]:
    def make(n: int, m: int) -> Callable[[PanelState], np.ndarray]:
        return lambda s: poly_mul(poly_mul(s.W[n], constant_poly(s.H)), np.transpose(s.W[m], (0, 2, 1)))

    return {f"alpha_{n}_{m}": make(n, m) for n in range(N + 1) for m in range(N + 1)}


def _piecewise_series(H: Hamiltonian, t: float, N: int, forms: bool) -> SeriesCoefficients:
    integrands = _alpha_integrands(N) if forms else None
    W, totals = walk_panels(H, t, N, integrands)
    alpha = None
    if forms:
        alpha = np.array([[totals[f"alpha_{n}_{m}"] for m in range(N + 1)] for n in range(N + 1)])
    return SeriesCoefficients(t=t, W=W, alpha=alpha, beta=_betas(W) if forms else None, exact=True)


class GeneralizedPolynomial:
    """Matrix-valued sum of A_e * u**e with real exponents e > -1."""

    def __init__(self, terms: dict[float, np.ndarray] | None = None):
        self.terms = terms or {}

    @classmethod
    def constant(cls, matrix: np.ndarray) -> "GeneralizedPolynomial":
        return cls({0.0: np.asarray(matrix, dtype=float)})

    def __matmul__(self, other: "GeneralizedPolynomial") -> "GeneralizedPolynomial":
        out: dict[float, np.ndarray] = {}
        for e1, A in self.terms.items():
            for e2, B in other.terms.items():
                key = round(e1 + e2, 12)
                out[key] = out.get(key, np.zeros((2, 2))) + A @ B
        return GeneralizedPolynomial(out)

    def times(self, matrix: np.ndarray) -> "GeneralizedPolynomial":
        return GeneralizedPolynomial({e: A @ matrix for e, A in self.terms.items()})

    def transpose(self) -> "GeneralizedPolynomial":
        return GeneralizedPolynomial({e: A.T for e, A in self.terms.items()})

    def integral(self) -> "GeneralizedPolynomial":
        return GeneralizedPolynomial({round(e + 1.0, 12): A / (e + 1.0) for e, A in self.terms.items()})

    def __call__(self, u: float) -> np.ndarray:
        total = np.zeros((2, 2))
        for e, A in self.terms.items():
            total = total + A * (u**e if e != 0.0 else 1.0)
        return total


def _power_H(terms) -> GeneralizedPolynomial:
    out: dict[float, np.ndarray] = {}
    positions = ((0, 0), (1, 1), (0, 1))
    for index, part in enumerate(terms):
        for coefficient, rho in part:
            key = round(rho - 1.0, 12)
            matrix = out.setdefault(key, np.zeros((2, 2)))
            i, j = positions[index]
            matrix[i, j] += coefficient * rho
            if i != j:
                matrix[j, i] += coefficient * rho
    return GeneralizedPolynomial(out)


def _power_series(H: Hamiltonian, t: float, N: int, forms: bool) -> SeriesCoefficients:
    Hpoly = _power_H(H.power_terms())
    u = t - H.a
    polys = [GeneralizedPolynomial.constant(np.eye(2))]
    for _ in range(N):
        polys.append((polys[-1] @ Hpoly).integral().times(MINUS_J))
    W = tuple(poly(u) for poly in polys)
    alpha = None
    if forms:
        alpha = np.zeros((N + 1, N + 1, 2, 2))
        for n in range(N + 1):
            left = polys[n] @ Hpoly
            for m in range(N + 1):
                alpha[n, m] = (left @ polys[m].transpose()).integral()(u)
    return SeriesCoefficients(t=t, W=W, alpha=alpha, beta=_betas(W) if forms else None, exact=True)


def _ode_series(H: Hamiltonian, t: float, N: int, forms: bool) -> SeriesCoefficients:
    primitive = H.primitive()
    target = primitive.trace(t)
    u = t - H.a
    for _ in range(400):
        if primitive.trace(H.a + u) <= 1e-14 * target:
            break
        u *= 0.01
    start = H.a + u
    size = N + 1

    def unpack(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = y[: 4 * size].reshape(size, 2, 2)
        alpha = y[4 * size :].reshape(size, size, 2, 2)
        return W, alpha

    def rhs(s: float, y: np.ndarray) -> np.ndarray:
        W, _ = unpack(y)
        Hs = H.matrix(s)
        dW = np.zeros_like(W)
        dW[1:] = np.einsum("nab,bc,cd->nad", W[:-1], Hs, MINUS_J)
        if not forms:
            return np.concatenate([dW.ravel(), np.zeros(size * size * 4)])
        dalpha = np.einsum("nab,bc,mdc->nmad", W, Hs, W)
        return np.concatenate([dW.ravel(), dalpha.ravel()])

    W0 = np.zeros((size, 2, 2))
    W0[0] = np.eye(2)
    M_start = primitive.matrix(start)
    if N >= 1:
        W0[1] = M_start @ MINUS_J
    alpha0 = np.zeros((size, size, 2, 2))
    alpha0[0, 0] = M_start
    points = [start, *H.breakpoints(start, t), t]
    y = np.concatenate([W0.ravel(), alpha0.ravel()])
    for lo, hi in zip(points[:-1], points[1:]):
        solution = integrate.solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=1e-12, atol=1e-15)
        if not solution.success:
            raise QuadratureError(
                message=f"Series recurrence integration failed on [{lo:.6g}, {hi:.6g}]: {solution.message}",
                payload={"t": t, "N": N},
            )
        y = solution.y[:, -1]
    W, alpha = unpack(y)
    return SeriesCoefficients(
        t=t,
        W=tuple(W),
        alpha=alpha if forms else None,
        beta=_betas(tuple(W)) if forms else None,
        exact=False,
    )


def series_coefficients(H: Hamiltonian, t: float, N: int, *, forms: bool = False) -> SeriesCoefficients:
    if N < 0:
        raise DomainError("The series order must be non-negative.")
    if not H.a <= t <= H.b or math.isinf(t):
        raise DomainError(f"t={t} lies outside [{H.a}, {H.b}).")
    if t == H.a:
        W = tuple([np.eye(2)] + [np.zeros((2, 2)) for _ in range(N)])
        zero = np.zeros((N + 1, N + 1, 2, 2))
        return SeriesCoefficients(t=t, W=W, alpha=zero if forms else None, beta=_betas(W) if forms else None)
    if H.piecewise:
        return _piecewise_series(H, t, N, forms)
    if H.power_terms() is not None:
        return _power_series(H, t, N, forms)
    return _ode_series(H, t, N, forms)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    indices: tuple[int, ...]
    holds: bool
    lhs: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class CoefficientBoundReport:
    t: float
    N: int
    checks: tuple[BoundCheck, ...] = field(default_factory=tuple)

    @property
    def violations(self) -> tuple[BoundCheck, ...]:
        return tuple(check for check in self.checks if not check.holds)

    @property
    def ok(self) -> bool:
        return not self.violations

    def names(self) -> set[str]:
        return {check.name for check in self.checks}


def _le(lhs: np.ndarray, rhs: np.ndarray) -> bool:
    return entrywise_abs_order(lhs, rhs, ORDER_SLACK * (1.0 + float(np.max(np.abs(rhs)))))


def _close(lhs: np.ndarray, rhs: np.ndarray) -> bool:
    scale = 1.0 + float(max(np.max(np.abs(lhs)), np.max(np.abs(rhs))))
    return bool(np.max(np.abs(lhs - rhs)) <= 1e-9 * scale)


def majorants(H: Hamiltonian, t: float) -> tuple[np.ndarray, float]:
    m1, m2, _ = H.primitive().values(t)
    root = math.sqrt(max(m1 * m2, 0.0))
    return np.array([[m1, root], [root, m2]]), 2.0 * root


def verify_coefficient_bounds(H: Hamiltonian, t: float, N: int) -> CoefficientBoundReport:
    """Check the entrywise estimates and identities of the coefficient recursion at t."""
    cap = _get_series_cap()
    if N > cap:
        raise DomainError(f"Series order {N} exceeds the configured cap {cap}.")
    series = series_coefficients(H, t, N, forms=True)
    W, alpha, beta = series.W, series.alpha, series.beta
    M = H.primitive().matrix(t)
    detM = float(np.linalg.det(M))
    Mp, mp = majorants(H, t)
    checks: list[BoundCheck] = []

    def add(name: str, indices: tuple[int, ...], holds: bool, lhs: np.ndarray, rhs: np.ndarray) -> None:
        checks.append(BoundCheck(name, indices, holds, lhs, rhs))

    add("primitive_majorant", (), _le(np.abs(M), Mp), np.abs(M), Mp)
    if H.piecewise:
        total_abs = sum(np.abs(panel.matrix) * panel.length for panel in H.panels(H.a, t))
        add("abs_integral_majorant", (), _le(total_abs, Mp), total_abs, Mp)
    for n in range(N + 1):
        lhs = np.linalg.matrix_power(Mp @ ABS_J, n) @ Mp
        add("majorant_power", (n,), _close(lhs, mp**n * Mp), lhs, mp**n * Mp)

    add("first_coefficient", (1,), _close(W[1] @ J, M) if N >= 1 else True, W[1] @ J if N >= 1 else M, M)
    if N >= 1:
        add("first_square", (1,), _close(W[1] @ W[1], -detM * np.eye(2)), W[1] @ W[1], -detM * np.eye(2))
    for n in range(1, N + 1):
        rhs = mp ** (n - 1) * Mp @ ABS_J
        add("coefficient_bound", (n,), _le(np.abs(W[n]), rhs), np.abs(W[n]), rhs)
    for n in range(N + 1):
        for m in range(N + 1):
            rhs = mp ** (n + m) * Mp
            add("form_bound", (n, m), _le(np.abs(alpha[n, m]), rhs), np.abs(alpha[n, m]), rhs)
            add("form_symmetry", (n, m), _close(alpha[m, n], alpha[n, m].T), alpha[m, n], alpha[n, m].T)
            add("beta_antisymmetry", (n, m), _close(beta[m, n], -beta[n, m].T), beta[m, n], -beta[n, m].T)
    for k in range(N // 2 + 1):
        for l in range(N // 2 + 1):
            if (k, l) == (0, 0) or 2 * k + 1 > N or 2 * l + 1 > N:
                continue
            rhs = detM * (1 + 3 * (k + l)) * mp ** (2 * (k + l) - 1) * Mp
            lhs = np.abs(beta[2 * k + 1, 2 * l + 1])
            add("odd_beta_bound", (k, l), _le(lhs, rhs), lhs, rhs)
    for n in range(N):
        for m in range(N):
            lhs = alpha[n, m + 1] - alpha[n + 1, m]
            add("form_difference", (n, m), _close(lhs, beta[n + 1, m + 1]), lhs, beta[n + 1, m + 1])
        add("form_edge_left", (n,), _close(alpha[n, 0], beta[n + 1, 0]), alpha[n, 0], beta[n + 1, 0])
        add("form_edge_right", (n,), _close(alpha[0, n], -beta[0, n + 1]), alpha[0, n], -beta[0, n + 1])

    if H.piecewise:
        checks.extend(_integration_by_parts_checks(H, t, N, W, alpha, detM))

    report = CoefficientBoundReport(t=t, N=N, checks=tuple(checks))
    if report.ok:
        logger.info(f"All {len(checks)} coefficient checks hold at t={t:.6g}, N={N}")
    else:
        logger.warning(f"{len(report.violations)} coefficient checks fail at t={t:.6g}, N={N}")
    return report


def _integration_by_parts_checks(H, t, N, W, alpha, detM) -> list[BoundCheck]:
    T = lambda poly: np.transpose(poly, (0, 2, 1))  # noqa: E731
    Hc = lambda s: constant_poly(s.H)  # noqa: E731
    Jc = constant_poly(J)
    integrands: dict[str, Callable[[PanelState], np.ndarray]] = {}
    for n in range(1, N + 1):
        for m in range(1, N + 1):
            integrands[f"left_{n}_{m}"] = (
                lambda s, n=n, m=m: poly_mul(poly_mul(poly_mul(s.W[n], s.W[1]), Hc(s)), T(s.W[m - 1]))
            )
            integrands[f"right_{n}_{m}"] = (
                lambda s, n=n, m=m: poly_mul(poly_mul(poly_mul(s.W[n - 1], Hc(s)), T(s.W[1])), T(s.W[m]))
            )
    for n in range(3, N + 1):
        integrands[f"det_{n}"] = lambda s, n=n: poly_mul(poly_mul(s.det_poly(), s.W[n - 3]), poly_mul(Hc(s), Jc))
        integrands[f"cross_{n}"] = (
            lambda s, n=n: poly_mul(poly_mul(poly_mul(s.W[n - 2], Jc), T(s.W[1])), poly_mul(Jc, poly_mul(Hc(s), Jc)))
        )
    _, totals = walk_panels(H, t, N, integrands)

    checks: list[BoundCheck] = []
    for n in range(1, N + 1):
        for m in range(1, N + 1):
            rhs = W[n] @ W[1] @ J @ W[m].T + totals[f"left_{n}_{m}"] + totals[f"right_{n}_{m}"]
            checks.append(BoundCheck("parts_identity_forms", (n, m), _close(alpha[n, m], rhs), alpha[n, m], rhs))
    for n in range(3, N + 1):
        rhs = W[n - 1] @ W[1] + detM * W[n - 2] + totals[f"det_{n}"] - totals[f"cross_{n}"]
        checks.append(BoundCheck("parts_identity_coefficients", (n,), _close(W[n], rhs), W[n], rhs))
    return checks
