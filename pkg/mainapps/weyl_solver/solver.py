from __future__ import annotations

import cmath
from dataclasses import dataclass
import logging
import math

import numpy as np
from django.conf import settings
from scipy import integrate

from core.errors import ConfigurationError, DegenerateDisc, DomainError, SlowShrink, StepFailure
from mainapps.hamiltonians.hamiltonian import J, Hamiltonian, Panel


logger = logging.getLogger(__name__)


IDENTITY = np.eye(2, dtype=complex)
HEAD_THRESHOLD = 1e-12
PANEL_STEP = 1.0
SHRINK_CAP = 1e6
GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _get_eps() -> float:
    try:
        return float(getattr(settings, "CANONICAL_WEYL_EPS", 1e-8))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_EPS must be a number.") from exc


@dataclass(frozen=True)
class WeylDisc:
    centre: complex
    radius: float

    def contains(self, value: complex, tol: float = 0.0) -> bool:
        return abs(value - self.centre) <= self.radius + tol

    def contains_disc(self, other: "WeylDisc", tol: float = 0.0) -> bool:
        return abs(other.centre - self.centre) <= self.radius - other.radius + tol


@dataclass(frozen=True)
class CertifiedValue:
    value: complex
    radius: float
    t: float = math.nan

    def conjugate(self) -> "CertifiedValue":
        return CertifiedValue(self.value.conjugate(), self.radius, self.t)


def panel_propagator(panel: Panel, length: float, z: complex) -> np.ndarray:
    """exp(-z * length * H J) for a constant H, using (HJ)^2 = -det(H) I."""
    h1, h2, h3 = panel.h1, panel.h2, panel.h3
    hj = np.array([[h3, -h1], [h2, -h3]], dtype=complex)
    zl = z * length
    det = max(panel.det, 0.0)
    theta_sq = zl * zl * det
    if abs(theta_sq) < 1e-3:
        x = theta_sq
        cosine = 1 - x / 2 + x * x / 24 - x**3 / 720 + x**4 / 40320
        sinc = 1 - x / 6 + x * x / 120 - x**3 / 5040 + x**4 / 362880
    else:
        theta = zl * math.sqrt(det)
        cosine = cmath.cos(theta)
        sinc = cmath.sin(theta) / theta
    return cosine * IDENTITY - sinc * zl * hj


class Propagator:
    """Marches W(t, z) forward from the left endpoint.

    Near a the first order approximation I - z M(t) J is used until |z| tr M
    exceeds HEAD_THRESHOLD. Piecewise constant Hamiltonians are then advanced
    panel by panel with exact propagators, everything else with DOP853.
    When ``track_nabla`` is set the integral of W H W* is accumulated as well.
    """

    def __init__(self, H: Hamiltonian, z: complex, *, until: float, track_nabla: bool = False, rtol: float = 1e-12):
        self.H = H
        self.z = complex(z)
        self.track_nabla = track_nabla
        self.rtol = rtol
        self.primitive = H.primitive()
        self.t = head_point(H, self.z, until)
        M = self.primitive.matrix(self.t)
        self.W = IDENTITY - self.z * (M @ J)
        self.nabla = M.astype(complex) if track_nabla else None

    def advance(self, t_next: float) -> np.ndarray:
        if t_next <= self.t:
            return self.W
        if self.H.piecewise:
            for panel in self.H.panels(self.t, t_next):
                self._panel_step(panel)
        else:
            points = [self.t, *self.H.breakpoints(self.t, t_next), t_next]
            for start, end in zip(points[:-1], points[1:]):
                self._ode_step(start, end)
        self.t = t_next
        return self.W

    def _panel_step(self, panel: Panel) -> None:
        # rank-one panels propagate polynomially and need no splitting
        weight = abs(self.z) * panel.length * math.sqrt(max(panel.h1 * panel.h2 - panel.h3 * panel.h3, 0.0))
        pieces = max(1, math.ceil(weight / PANEL_STEP))
        length = panel.length / pieces
        step = panel_propagator(panel, length, self.z)
        for _ in range(pieces):
            if self.track_nabla:
                self.nabla = self.nabla + self._panel_nabla(panel, length)
            self.W = self.W @ step

    def _panel_nabla(self, panel: Panel, length: float) -> np.ndarray:
        H = panel.matrix
        total = np.zeros((2, 2), dtype=complex)
        for node, weight in zip(GAUSS_NODES, GAUSS_WEIGHTS):
            Ws = self.W @ panel_propagator(panel, 0.5 * length * (node + 1.0), self.z)
            total += weight * (Ws @ H @ Ws.conj().T)
        return 0.5 * length * total

    def _rhs(self, s: float, y: np.ndarray) -> np.ndarray:
        W = y[:4].reshape(2, 2)
        Hs = self.H.matrix(min(s, math.nextafter(self.H.b, -math.inf)))
        dW = -self.z * (W @ Hs @ J)
        if not self.track_nabla:
            return dW.ravel()
        return np.concatenate([dW.ravel(), (W @ Hs @ W.conj().T).ravel()])

    def _ode_step(self, start: float, end: float) -> None:
        y0 = self.W.ravel()
        if self.track_nabla:
            y0 = np.concatenate([y0, self.nabla.ravel()])
        h_start = self.H.entries(start)
        local_trace = max(h_start[0] + h_start[1], 1e-300)
        max_step = max(0.5 / (abs(self.z) * local_trace), (end - start) * 1e-6)
        solution = integrate.solve_ivp(
            self._rhs,
            (start, end),
            y0,
            method="DOP853",
            rtol=self.rtol,
            atol=1e-14,
            max_step=max_step,
        )
        if not solution.success:
            raise StepFailure(
                message=f"Integration of W on [{start:.6g}, {end:.6g}] failed: {solution.message}",
                payload={"z": str(self.z), "start": start, "end": end},
            )
        y = solution.y[:, -1]
        self.W = y[:4].reshape(2, 2)
        if self.track_nabla:
            self.nabla = y[4:].reshape(2, 2)


def head_point(H: Hamiltonian, z: complex, until: float) -> float:
    """Largest convenient t <= until with |z| tr M(t) <= HEAD_THRESHOLD."""
    primitive = H.primitive()
    scale = abs(z)
    if scale == 0.0 or until <= H.a:
        return max(H.a, min(until, H.a))
    u = until - H.a
    for _ in range(400):
        if scale * primitive.trace(H.a + u) <= HEAD_THRESHOLD:
            return H.a + u
        u *= 0.01
        if u <= 0.0:
            break
    return H.a


def fundamental_solution(H: Hamiltonian, t: float, z: complex, tol: float = 1e-12) -> np.ndarray:
    if not H.a <= t <= H.b or math.isinf(t):
        raise DomainError(f"t={t} lies outside [{H.a}, {H.b}).")
    if z == 0 or t == H.a:
        return IDENTITY.copy()
    propagator = Propagator(H, z, until=t, rtol=tol)
    return propagator.advance(t)


def nabla_from_W(W: np.ndarray, z: complex) -> np.ndarray:
    return (W @ J @ W.conj().T - J) / (2j * z.imag)


def nabla(H: Hamiltonian, t: float, z: complex, *, route: str = "algebraic") -> np.ndarray:
    """(W J W* - J) / (2 i Im z), or the integral of W H W* when route='quadrature'."""
    z = complex(z)
    if z.imag == 0.0:
        raise DomainError("nabla needs a non-real spectral parameter.")
    if t == H.a:
        return np.zeros((2, 2), dtype=complex)
    if route == "algebraic":
        return nabla_from_W(fundamental_solution(H, t, z), z)
    if route != "quadrature":
        raise DomainError(f"Unknown route '{route}'.")
    propagator = Propagator(H, z, until=t, track_nabla=True)
    propagator.advance(t)
    return propagator.nabla


def disc_from_W(W: np.ndarray, z: complex) -> WeylDisc:
    N = nabla_from_W(W, z)
    a = N[1, 1].real
    if a <= 1e-13 * abs(N[0, 0]) or a <= 0.0:
        raise DegenerateDisc(
            message="a(t, z) vanishes; h2 is zero almost everywhere on (a, t).",
            payload={"a": a},
        )
    b = N[0, 1]
    radius = 1.0 / (2.0 * z.imag * a)
    return WeylDisc(centre=complex(b / a + 1j * radius), radius=radius)


def weyl_disc(H: Hamiltonian, t: float, z: complex) -> WeylDisc:
    z = complex(z)
    if z.imag <= 0.0:
        raise DomainError("Weyl discs are computed for z in the upper half-plane.")
    return disc_from_W(fundamental_solution(H, t, z), z)


def weyl_coefficient(H: Hamiltonian, z: complex, eps: float | None = None) -> CertifiedValue:
    """Centre of the first Weyl disc whose radius is below eps.

    The true value lies in every disc along the way, so the radius is the
    certificate.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise DomainError("The Weyl coefficient is evaluated off the real axis.")
    if z.imag < 0.0:
        return weyl_coefficient(H, z.conjugate(), eps).conjugate()
    target = _get_eps() if eps is None else eps

    primitive = H.primitive()
    reference = 1.0 / abs(z)
    horizon = H.b if math.isfinite(H.b) else H.a + 1.0
    propagator = Propagator(H, z, until=horizon)
    t = propagator.t
    if t <= H.a:
        t = H.a + (horizon - H.a) * 1e-15
        propagator.advance(t)

    cap_trace = SHRINK_CAP * max(reference, primitive.trace(H.a + 2.0 * (t - H.a)))
    tail = H.rank_one_tail()
    best_radius = math.inf
    while True:
        t_next = H.a + 2.0 * (t - H.a)
        if tail is not None and t < tail < t_next:
            t_next = tail
        final = math.isfinite(H.b) and t_next >= H.b
        if final:
            t_next = H.b
        propagator.advance(t_next)
        t = t_next
        try:
            disc = disc_from_W(propagator.W, z)
        except DegenerateDisc:
            disc = None
        if disc is not None:
            best_radius = min(best_radius, disc.radius)
            if disc.radius <= target:
                logger.debug(f"q_H({z}) = {disc.centre} +- {disc.radius:.2e} at t={t:.6g}")
                return CertifiedValue(value=disc.centre, radius=disc.radius, t=t)
        if tail is not None and t >= tail:
            return close_rank_one_tail(H, propagator.W, z, target, t)
        if final or primitive.trace(t) > cap_trace or not math.isfinite(H.a + 2.0 * (t - H.a)):
            raise SlowShrink(
                message=f"Weyl discs at z={z} did not shrink below {target:.1e} before t={t:.6g}.",
                payload={"z": str(z), "t": t},
                achieved_radius=best_radius,
            )


def close_rank_one_tail(H: Hamiltonian, W: np.ndarray, z: complex, target: float, t: float) -> CertifiedValue:
    """Finish the march over a final infinite interval where H = xi xi^T.

    There W xi stays fixed, so nabla grows linearly, N(t + s) = N(t) + s v v*
    with v = W(t) xi, and the disc of radius ``target`` is written down
    directly.
    """
    h1, h2, h3 = H.entries(t)
    xi = np.array([math.sqrt(h1), math.copysign(math.sqrt(h2), h3)])
    v = W @ xi
    N = nabla_from_W(W, z)
    weight = abs(v[1]) ** 2
    a0 = N[1, 1].real
    if weight <= 1e-300:
        raise SlowShrink(
            message=f"The rank-one tail from t={t:.6g} does not shrink the discs at z={z}.",
            payload={"z": str(z), "t": t},
            achieved_radius=1.0 / (2.0 * z.imag * a0) if a0 > 0.0 else math.inf,
        )
    s = max(0.0, (1.0 / (2.0 * z.imag * target) - a0) / weight)
    a = a0 + s * weight
    b = N[0, 1] + s * v[0] * v[1].conjugate()
    radius = 1.0 / (2.0 * z.imag * a)
    logger.debug(f"q_H({z}) closed over the rank-one tail at t={t:.6g} + {s:.3g}")
    return CertifiedValue(value=complex(b / a + 1j * radius), radius=radius, t=t + s)
