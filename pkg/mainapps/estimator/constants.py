from __future__ import annotations

import math

from django.conf import settings

from core.errors import ConfigurationError, ParameterOutOfRange


Q_UPPER = 1.0 - 1.0 / math.sqrt(2.0)


def _get_q() -> float:
    try:
        return float(getattr(settings, "CANONICAL_WEYL_Q", 0.2))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_Q must be a number.") from exc


def _get_root_tol() -> float:
    try:
        return float(getattr(settings, "CANONICAL_WEYL_ROOT_TOL", 1e-10))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_ROOT_TOL must be a number.") from exc


def check_q(q: float) -> float:
    if not 0.0 < q < Q_UPPER:
        raise ParameterOutOfRange(
            message=f"q={q} must lie in (0, {Q_UPPER:.6f}).",
            payload={"q": q},
        )
    return q


def sigma(q: float) -> float:
    return 1.0 / (1.0 - q) ** 2 - 1.0


def abs_constant(q: float, theta: float = math.pi / 2) -> float:
    """(1 + sigma + 2/(q sin theta)) / (1 - sigma)."""
    s = sigma(q)
    return (1.0 + s + 2.0 / (q * math.sin(theta))) / (1.0 - s)


def re_constant(q: float, theta: float) -> float:
    s = sigma(q)
    return (1.0 + s + 1.0 / (q * math.sin(theta))) / (1.0 - s)


def im_upper_constant(q: float, theta: float) -> float:
    s = sigma(q)
    return (s + 2.0 / (q * math.sin(theta))) / (1.0 - s)


def im_lower_constant(q: float, theta: float) -> float:
    s = sigma(q)
    return (q * math.sin(theta) / 2.0) / (1.0 + abs(math.cos(theta))) * (1.0 - s) / (1.0 + s)


def kasahara_band(q: float | None = None) -> tuple[float, float]:
    """Universal band for q_S(-y) / f^-(1/y).

    With r = sqrt(y), q_S(-y) = |q_H(ir)| / r lies within abs_constant of
    (2/q) f^-(q^2/(4y)), and c f^-(u) <= f^-(cu) <= f^-(u) for c = q^2/4 since
    f(x)/x is non-decreasing.
    """
    q = check_q(_get_q() if q is None else q)
    K = abs_constant(q)
    return (q / (2.0 * K), 2.0 * K / q)
