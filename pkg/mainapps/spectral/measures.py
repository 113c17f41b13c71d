from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Iterable

from scipy import integrate

from core.errors import DomainError


logger = logging.getLogger(__name__)


QUAD_RTOL = 1e-12


@dataclass(frozen=True)
class DensityPiece:
    """Density sum c |t|**p on [lo, hi)."""

    lo: float
    hi: float
    terms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise DomainError(f"Empty density interval [{self.lo}, {self.hi}).")
        for c, p in self.terms:
            if c < 0.0:
                raise DomainError("Density coefficients must be non-negative.")
            if self.lo <= 0.0 <= self.hi and p <= -1.0:
                raise DomainError(f"|t|^{p} is not integrable at 0.")
            if (math.isinf(self.lo) or math.isinf(self.hi)) and p >= 1.0:
                raise DomainError(f"|t|^{p} is not Poisson integrable at infinity.")

    def mirrored(self) -> "DensityPiece":
        return DensityPiece(-self.hi, -self.lo, self.terms)

    def density(self, t: float) -> float:
        return sum(c * abs(t) ** p for c, p in self.terms)


def _abs_power_mass(p: float, u: float, v: float) -> float:
    """integral of |t|**p over [u, v]."""
    if u >= v:
        return 0.0
    if u >= 0.0:
        if p == -1.0:
            return math.log(v / u)
        return (v ** (p + 1.0) - u ** (p + 1.0)) / (p + 1.0)
    if v <= 0.0:
        return _abs_power_mass(p, -v, -u)
    return _abs_power_mass(p, 0.0, -u) + _abs_power_mass(p, 0.0, v)


@dataclass(frozen=True)
class SyntheticMeasure:
    """Atoms plus power densities; with ``symmetric`` every piece is mirrored to -t.

    ``alpha`` and ``beta`` complete the Herglotz data q(z) = alpha + beta z + ...
    """

    atoms: tuple[tuple[float, float], ...] = ()
    densities: tuple[DensityPiece, ...] = ()
    symmetric: bool = False
    alpha: float = 0.0
    beta: float = 0.0
    name: str = ""
    _atoms: tuple[tuple[float, float], ...] = field(init=False, repr=False, compare=False)
    _densities: tuple[DensityPiece, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if any(mass < 0.0 for _, mass in self.atoms):
            raise DomainError("Atom masses must be non-negative.")
        if self.beta < 0.0:
            raise DomainError("The linear term must be non-negative.")
        atoms = list(self.atoms)
        densities = list(self.densities)
        if self.symmetric:
            atoms += [(-x, mass) for x, mass in self.atoms if x != 0.0]
            densities += [piece.mirrored() for piece in self.densities]
        object.__setattr__(self, "_atoms", tuple(sorted(atoms)))
        object.__setattr__(self, "_densities", tuple(densities))

    @property
    def all_atoms(self) -> tuple[tuple[float, float], ...]:
        return self._atoms

    @property
    def all_densities(self) -> tuple[DensityPiece, ...]:
        return self._densities

    @property
    def total_mass(self) -> float:
        return double_arrow(self, math.inf)

    @classmethod
    def lebesgue(cls, c: float = 1.0) -> "SyntheticMeasure":
        return cls(densities=(DensityPiece(-math.inf, math.inf, ((c, 0.0),)),), name="lebesgue")

    @classmethod
    def unit_atom(cls, location: float = 0.0) -> "SyntheticMeasure":
        return cls(atoms=((location, 1.0),), name=f"delta_{location:g}")

    @classmethod
    def power_density(cls, p: float, c: float = 1.0) -> "SyntheticMeasure":
        """c |t|**p on the whole line."""
        return cls(densities=(DensityPiece(0.0, math.inf, ((c, p),)),), symmetric=True, name=f"|t|^{p:g}")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticMeasure":
        pieces = tuple(
            DensityPiece(float(piece["lo"]), float(piece["hi"]), tuple((float(c), float(p)) for c, p in piece["terms"]))
            for piece in data.get("densities", ())
        )
        return cls(
            atoms=tuple((float(x), float(m)) for x, m in data.get("atoms", ())),
            densities=pieces,
            symmetric=bool(data.get("symmetric", False)),
            alpha=float(data.get("alpha", 0.0)),
            beta=float(data.get("beta", 0.0)),
            name=str(data.get("name", "")),
        )


def _cuts(piece: DensityPiece, extra: Iterable[float]) -> list[float]:
    points = {piece.lo, piece.hi}
    points.update(x for x in extra if piece.lo < x < piece.hi)
    return sorted(points)


def _poisson_piece(piece: DensityPiece, x: float, y: float) -> float:
    total = 0.0
    for c, p in piece.terms:
        if p == 0.0:
            lo = math.atan((piece.lo - x) / y) if math.isfinite(piece.lo) else -math.pi / 2
            hi = math.atan((piece.hi - x) / y) if math.isfinite(piece.hi) else math.pi / 2
            total += c * (hi - lo)
            continue
        cuts = _cuts(piece, (0.0, x, x - y, x + y, -1.0, 1.0))
        for u, v in zip(cuts[:-1], cuts[1:]):
            kernel = lambda t: y / ((t - x) ** 2 + y * y)
            if math.isfinite(u) and math.isfinite(v) and (u == 0.0 or v == 0.0):
                wvar = (p, 0.0) if u == 0.0 else (0.0, p)
                value, _ = integrate.quad(kernel, u, v, weight="alg", wvar=wvar, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
            else:
                value, _ = integrate.quad(
                    lambda t: abs(t) ** p * kernel(t), u, v, epsabs=0.0, epsrel=QUAD_RTOL, limit=400
                )
            total += c * value
    return total


def poisson_integral(mu: SyntheticMeasure, z: complex) -> float:
    """P_mu(z), the integral of Im 1/(t - z) against mu."""
    x, y = z.real, z.imag
    if y <= 0.0:
        raise DomainError(f"The Poisson integral needs Im z > 0, got {z}.")
    atoms = math.fsum(mass * y / ((t - x) ** 2 + y * y) for t, mass in mu.all_atoms)
    return atoms + sum(_poisson_piece(piece, x, y) for piece in mu.all_densities)


def double_arrow(mu: SyntheticMeasure, r: float) -> float:
    """mu((-r, r)), the distribution function of the push-forward under |t|."""
    if r < 0.0:
        raise DomainError(f"double_arrow needs r >= 0, got {r}.")
    total = math.fsum(mass for t, mass in mu.all_atoms if abs(t) < r)
    for piece in mu.all_densities:
        u, v = max(piece.lo, -r), min(piece.hi, r)
        for c, p in piece.terms:
            total += c * _abs_power_mass(p, u, v)
    return total
