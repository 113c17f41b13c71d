from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

from core.errors import DomainError

from .hamiltonian import (
    AlternatingRankOneHamiltonian,
    DyadicPattern,
    Hamiltonian,
    IntervalUnionPattern,
    Panel,
    PiecewiseConstantHamiltonian,
    PowerPrimitiveHamiltonian,
)
from .transforms import derive_rotation, rotate


OSCILLATING_LEVELS = 10


def identity() -> Hamiltonian:
    return PiecewiseConstantHamiltonian([Panel(0.0, math.inf, 1.0, 1.0, 0.0)], name="identity")


def diagonal(h1: float = 4.0, h2: float = 1.0) -> Hamiltonian:
    return PiecewiseConstantHamiltonian([Panel(0.0, math.inf, h1, h2, 0.0)], name=f"diagonal_{h1:g}_{h2:g}")


def alternating_rank_one(phi: float = math.pi / 4) -> Hamiltonian:
    pattern = IntervalUnionPattern(((0.0, 0.5), (1.0, 2.0), (3.0, math.inf)))
    return AlternatingRankOneHamiltonian(phi, pattern, name="alternating_rank_one")


def dyadic_alternating(phi: float = math.pi / 4) -> Hamiltonian:
    return AlternatingRankOneHamiltonian(phi, DyadicPattern(), name="dyadic_alternating")


def tilted_rank_one(alpha: float = 2.0) -> Hamiltonian:
    """m1 = 4t + t^alpha, m2 = t + t^alpha, m3 = 2t + t^alpha."""
    return PowerPrimitiveHamiltonian(
        m1=[(4.0, 1.0), (1.0, alpha)],
        m2=[(1.0, 1.0), (1.0, alpha)],
        m3=[(2.0, 1.0), (1.0, alpha)],
        name=f"tilted_rank_one_{alpha:g}",
    )


def tilted_rank_one_rotated(alpha: float = 2.0) -> Hamiltonian:
    base = tilted_rank_one(alpha)
    limit = derive_rotation(base)
    rotated = rotate(base, limit.phi)
    rotated.name = f"tilted_rank_one_{alpha:g}_rotated"
    return rotated


def split_prefix() -> Hamiltonian:
    """diag(1, 0) on [0, 1) followed by I; its Weyl coefficient is z + i."""
    return PiecewiseConstantHamiltonian(
        [Panel(0.0, 1.0, 1.0, 0.0, 0.0), Panel(1.0, math.inf, 1.0, 1.0, 0.0)],
        name="split_prefix",
    )


def angle_sweep(count: int) -> list[float]:
    """1, 1/2, 0, -1/2, -1, -2/3, ..., 1, 3/4, ...: legs over [-1, 1] with step 1/k."""
    values = [1.0]
    k = 2
    while len(values) < count:
        start = values[-1]
        step = -1.0 / k if start > 0 else 1.0 / k
        for j in range(1, 2 * k + 1):
            values.append(start + j * step)
            if len(values) >= count:
                break
        k += 1
    return values[:count]


def oscillating_angle(levels: int = OSCILLATING_LEVELS) -> Hamiltonian:
    """Panels (t_{n+1}, t_n] with t_n = 2**(1 - n*n) and H = [[1, s_n], [s_n, 1]] / 2."""
    angles = angle_sweep(levels + 1)
    nodes = [2.0 ** (1 - n * n) for n in range(1, levels + 2)]
    panels: list[Panel] = []
    head_s = math.sin(math.pi * angles[levels] / 2)
    panels.append(Panel(0.0, nodes[levels], 0.5, 0.5, 0.5 * head_s))
    for n in range(levels, 0, -1):
        s = math.sin(math.pi * angles[n - 1] / 2)
        panels.append(Panel(nodes[n], nodes[n - 1], 0.5, 0.5, 0.5 * s))
    panels.append(Panel(1.0, math.inf, 0.0, 1.0, 0.0))
    return PiecewiseConstantHamiltonian(panels, name="oscillating_angle")


def oscillating_nodes(levels: int = OSCILLATING_LEVELS) -> list[tuple[float, float]]:
    """(t_n, phi_n) pairs used by the oscillating angle fixture."""
    angles = angle_sweep(levels)
    return [(2.0 ** (1 - n * n), angles[n - 1]) for n in range(1, levels + 1)]


def power_fixture(rho1: float, rho2: float) -> Hamiltonian:
    """Diagonal Hamiltonian with m_j(t) = t**rho_j."""
    return PowerPrimitiveHamiltonian(m1=[(1.0, rho1)], m2=[(1.0, rho2)], name=f"power_{rho1:g}_{rho2:g}")


@dataclass(frozen=True)
class Fixture:
    name: str
    factory: Callable[[], Hamiltonian]
    description: str
    envelope_suite: bool = True


FIXTURES: dict[str, Fixture] = {
    fixture.name: fixture
    for fixture in (
        Fixture("identity", identity, "H = I on [0, inf); q_H = i"),
        Fixture("diagonal_4_1", diagonal, "H = diag(4, 1); q_H = 2i"),
        Fixture("alternating_rank_one", alternating_rank_one, "rank one dyads at +-pi/4 on a finite pattern"),
        Fixture("dyadic_alternating", dyadic_alternating, "rank one dyads at +-pi/4 on a dyadic pattern"),
        Fixture("tilted_rank_one", tilted_rank_one, "m = (4t+t^2, t+t^2, 2t+t^2)"),
        Fixture("tilted_rank_one_rotated", tilted_rank_one_rotated, "tilted_rank_one rotated to its limit dyad"),
        Fixture("split_prefix", split_prefix, "diag(1,0) on [0,1) then I; q_H = z + i", envelope_suite=False),
        Fixture("oscillating_angle", oscillating_angle, "dyad angles sweeping [-1,1] on super-geometric panels"),
    )
}


def get_fixture(name: str) -> Hamiltonian:
    try:
        fixture = FIXTURES[name]
    except KeyError as exc:
        raise DomainError(
            message=f"Unknown fixture '{name}'.",
            payload={"available": sorted(FIXTURES)},
        ) from exc
    return fixture.factory()
