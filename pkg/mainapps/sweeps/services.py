from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass, field
import json
import logging
import math
from typing import Any, Callable, Sequence, TextIO

from django.conf import settings
import numpy as np

from core.errors import CanonicalWeylError, ConfigurationError, NeedsMoreInformation, NotSupported
from mainapps.estimator.bounds import estimate_bundle, forms_consistent, t_crit
from mainapps.hamiltonians.corpus import FIXTURES, Fixture
from mainapps.hamiltonians.hamiltonian import Hamiltonian
from mainapps.spectral.growth import fg_criterion, kac_criterion, winkler_threshold
from mainapps.strings_sl.strings import kasahara_estimate
from mainapps.strings_sl.sturm_liouville import sl_envelope
from mainapps.weyl_solver.series import series_coefficients, verify_coefficient_bounds
from mainapps.weyl_solver.solver import weyl_coefficient

from .config import RunConfig


logger = logging.getLogger(__name__)


CSV_HEADER = (
    "r",
    "theta",
    "t_crit",
    "A",
    "L",
    "lower_abs",
    "upper_abs",
    "abs_q",
    "re_q",
    "im_q",
    "eps_cert",
    "envelope_ok",
)
SLOPE_COLUMNS = ("A", "L", "abs_q", "im_q")
CORPUS_HEADER = ("name", "description", "envelope_suite", "limit_point", "A", "L")


def _get_threads() -> int | None:
    value = getattr(settings, "CANONICAL_WEYL_THREADS", None)
    if value in (None, ""):
        return None
    try:
        threads = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("CANONICAL_WEYL_THREADS must be a positive integer.") from exc
    if threads < 1:
        raise ConfigurationError("CANONICAL_WEYL_THREADS must be a positive integer.")
    return threads


def _ordered_map(fn: Callable[[Any], Any], items: Sequence[Any]) -> list[Any]:
    """fn over items on the worker pool; results keep the order of items."""
    with ThreadPoolExecutor(max_workers=_get_threads()) as executor:
        return list(executor.map(fn, items))


@dataclass(frozen=True)
class SweepRow:
    r: float
    theta: float
    t_crit: float
    A: float
    L: float
    lower_abs: float
    upper_abs: float
    abs_q: float
    re_q: float
    im_q: float
    eps_cert: float
    envelope_ok: bool
    slack: float

    def as_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in CSV_HEADER} | {"slack": self.slack}


def _slope(rs: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(r), over the positive values."""
    pairs = [(math.log(r), math.log(v)) for r, v in zip(rs, values) if v > 0.0]
    if len(pairs) < 2:
        return math.nan
    x, y = np.array(pairs).T
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class SweepSummary:
    rows: int
    violations: int
    min_slack: float
    max_slack: float
    slopes: dict[float, dict[str, float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "violations": self.violations,
            "min_slack": self.min_slack,
            "max_slack": self.max_slack,
            "slopes": {repr(theta): slopes for theta, slopes in self.slopes.items()},
        }


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    summary: SweepSummary


def summarize(rows: Sequence[SweepRow]) -> SweepSummary:
    """Slack extremes and per-angle log-log slopes, reduced in row order."""
    slacks = [row.slack for row in rows]
    slopes: dict[float, dict[str, float]] = {}
    for theta in dict.fromkeys(row.theta for row in rows):
        selected = [row for row in rows if row.theta == theta]
        rs = [row.r for row in selected]
        slopes[theta] = {name: _slope(rs, [getattr(row, name) for row in selected]) for name in SLOPE_COLUMNS}
    return SweepSummary(
        rows=len(rows),
        violations=sum(not row.envelope_ok for row in rows),
        min_slack=min(slacks, default=math.nan),
        max_slack=max(slacks, default=math.nan),
        slopes=slopes,
    )


def evaluate_radius(H: Hamiltonian, r: float, cfg: RunConfig) -> list[SweepRow]:
    """One row per angle at radius r; the envelope is checked within the certificate radius."""
    bundle = estimate_bundle(H, r, cfg.angles, cfg.estimator)
    rows = []
    for theta in cfg.angles:
        env = bundle.envelope(theta)
        certified = weyl_coefficient(H, r * complex(math.cos(theta), math.sin(theta)), cfg.eps)
        slack = env.slack(certified.value, certified.radius)
        rows.append(
            SweepRow(
                r=r,
                theta=theta,
                t_crit=bundle.t_crit,
                A=bundle.A,
                L=bundle.L,
                lower_abs=env.lower_abs,
                upper_abs=env.upper_abs,
                abs_q=abs(certified.value),
                re_q=certified.value.real,
                im_q=certified.value.imag,
                eps_cert=certified.radius,
                envelope_ok=slack >= 0.0,
                slack=slack,
            )
        )
    return rows


def run_sweep(cfg: RunConfig) -> SweepResult:
    H = cfg.hamiltonian
    radii = cfg.radii()
    per_radius = _ordered_map(lambda r: evaluate_radius(H, r, cfg), radii)
    rows = tuple(row for group in per_radius for row in group)
    summary = summarize(rows)
    if summary.ok:
        logger.info(f"Sweep of {H.name or type(H).__name__}: {summary.rows} rows, min slack {summary.min_slack:.3e}")
    else:
        logger.warning(f"Sweep of {H.name or type(H).__name__}: {summary.violations} of {summary.rows} rows violate the envelope")
    return SweepResult(rows=rows, summary=summary)


@dataclass(frozen=True)
class ServiceResult:
    """Records for one command with the number of failed checks among them."""

    command: str
    records: tuple[dict[str, Any], ...]
    violations: int = 0
    summary: dict[str, Any] | None = None
    header: tuple[str, ...] | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _grid_points(cfg: RunConfig) -> list[tuple[float, float]]:
    return [(r, theta) for r in cfg.radii() for theta in cfg.angles]


def sweep_service(cfg: RunConfig) -> ServiceResult:
    result = run_sweep(cfg)
    return ServiceResult(
        command=cfg.command,
        records=tuple(row.as_dict() for row in result.rows),
        violations=result.summary.violations,
        summary=result.summary.as_dict(),
        header=CSV_HEADER,
    )


def estimate_service(cfg: RunConfig) -> ServiceResult:
    H = cfg.hamiltonian

    def record(r: float) -> dict[str, Any]:
        bundle = estimate_bundle(H, r, cfg.angles, cfg.estimator)
        row = {
            "r": r,
            "t_crit": bundle.t_crit,
            "A": bundle.A,
            "L": bundle.L,
            "m1": bundle.m1,
            "m2": bundle.m2,
            "m3": bundle.m3,
            "det": bundle.det,
            "forms_consistent": forms_consistent(bundle),
        }
        for theta in cfg.angles:
            env = bundle.envelope(theta)
            row[f"lower_abs@{theta:.6g}"] = env.lower_abs
            row[f"upper_abs@{theta:.6g}"] = env.upper_abs
        return row

    records = tuple(_ordered_map(record, cfg.radii()))
    return ServiceResult(cfg.command, records, violations=sum(not row["forms_consistent"] for row in records))


def weyl_service(cfg: RunConfig) -> ServiceResult:
    H = cfg.hamiltonian

    def record(point: tuple[float, float]) -> dict[str, Any]:
        r, theta = point
        certified = weyl_coefficient(H, r * complex(math.cos(theta), math.sin(theta)), cfg.eps)
        return {
            "r": r,
            "theta": theta,
            "re_q": certified.value.real,
            "im_q": certified.value.imag,
            "abs_q": abs(certified.value),
            "eps_cert": certified.radius,
            "t": certified.t,
        }

    return ServiceResult(cfg.command, tuple(_ordered_map(record, _grid_points(cfg))))


def bounds_check_service(cfg: RunConfig) -> ServiceResult:
    H = cfg.hamiltonian

    def record(r: float) -> dict[str, Any]:
        t = t_crit(H, r, cfg.estimator)
        report = verify_coefficient_bounds(H, t, cfg.series_order)
        return {
            "r": r,
            "t": t,
            "order": cfg.series_order,
            "checks": len(report.checks),
            "ok": report.ok,
            "violations": ";".join(sorted({check.name for check in report.violations})),
        }

    records = tuple(_ordered_map(record, cfg.radii()))
    return ServiceResult(cfg.command, records, violations=sum(not row["ok"] for row in records))


def series_check_service(cfg: RunConfig) -> ServiceResult:
    """Series coefficients W_n at t_crit(r) for each radius, one record per n."""
    H = cfg.hamiltonian

    def records_at(r: float) -> list[dict[str, Any]]:
        t = t_crit(H, r, cfg.estimator)
        series = series_coefficients(H, t, cfg.series_order)
        rows = []
        for n, Wn in enumerate(series.W):
            w = np.real_if_close(np.asarray(Wn))
            rows.append(
                {
                    "r": r,
                    "t": t,
                    "n": n,
                    "w11": float(np.real(w[0, 0])),
                    "w12": float(np.real(w[0, 1])),
                    "w21": float(np.real(w[1, 0])),
                    "w22": float(np.real(w[1, 1])),
                    "exact": series.exact,
                }
            )
        return rows

    groups = _ordered_map(records_at, cfg.radii())
    return ServiceResult(cfg.command, tuple(row for group in groups for row in group))


def spectral_service(cfg: RunConfig) -> ServiceResult:
    """Kac and limsup classifications of mu_H against the configured comparison function."""
    H = cfg.hamiltonian
    g = cfg.comparison_function()
    kac = kac_criterion(H, g)
    fg = fg_criterion(H, g)
    summary: dict[str, Any] = {"kac": kac.as_dict(), "fg": fg.as_dict()}
    try:
        summary["threshold"] = asdict(winkler_threshold(H))
    except (NotSupported, NeedsMoreInformation) as exc:
        summary["threshold"] = {"unavailable": exc.message}
    records = tuple(
        {"criterion": name, "g": report.g_name, "class": cls, "member": member, "violations": ";".join(report.violations())}
        for name, report in (("kac", kac), ("fg", fg))
        for cls, member in report.memberships.items()
    )
    violations = len(kac.violations()) + len(fg.violations())
    return ServiceResult(cfg.command, records, violations=violations, summary=summary)


def string_service(cfg: RunConfig) -> ServiceResult:
    S = cfg.string

    def record(y: float) -> dict[str, Any]:
        estimate = kasahara_estimate(S, y, q=cfg.q, eps=cfg.eps)
        return {
            "y": y,
            "f_inverse": estimate.f_inverse,
            "q_value": estimate.q_value,
            "ratio": estimate.ratio,
            "band_lower": estimate.band[0],
            "band_upper": estimate.band[1],
            "in_band": estimate.in_band,
        }

    records = tuple(_ordered_map(record, cfg.radii()))
    return ServiceResult(cfg.command, records, violations=sum(not row["in_band"] for row in records))


def sl_service(cfg: RunConfig) -> ServiceResult:
    prob, kappa = cfg.sl, cfg.kappa

    def record(point: tuple[float, float]) -> dict[str, Any]:
        r, theta = point
        return sl_envelope(prob, r, theta, kappa, eps=cfg.eps).as_dict()

    records = tuple(_ordered_map(record, _grid_points(cfg)))
    return ServiceResult(cfg.command, records, violations=sum(row["ok"] is False for row in records))


def corpus_service(cfg: RunConfig) -> ServiceResult:
    """Every fixture with its limit point flag and the estimate at r = 1."""

    def record(fixture: Fixture) -> dict[str, Any]:
        H = fixture.factory()
        row = {
            "name": fixture.name,
            "description": fixture.description,
            "envelope_suite": fixture.envelope_suite,
            "limit_point": H.limit_point,
            "A": None,
            "L": None,
        }
        try:
            bundle = estimate_bundle(H, 1.0, (), cfg.estimator)
        except ConfigurationError as exc:
            logger.info(f"No estimate at r = 1 for {fixture.name}: {exc.message}")
        else:
            row["A"], row["L"] = bundle.A, bundle.L
        return row

    return ServiceResult(cfg.command, tuple(_ordered_map(record, list(FIXTURES.values()))), header=CORPUS_HEADER)


SERVICES: dict[str, Callable[[RunConfig], ServiceResult]] = {
    "estimate": estimate_service,
    "weyl": weyl_service,
    "bounds-check": bounds_check_service,
    "series-check": series_check_service,
    "spectral": spectral_service,
    "string": string_service,
    "sl": sl_service,
    "sweep": sweep_service,
    "corpus": corpus_service,
}


def run_command(cfg: RunConfig) -> ServiceResult:
    try:
        result = SERVICES[cfg.command](cfg)
    except CanonicalWeylError as exc:
        logger.error(f"'{cfg.command}' failed: {exc}")
        raise
    logger.info(f"'{cfg.command}' produced {len(result.records)} records with {result.violations} failed checks")
    return result


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(result: ServiceResult, stream: TextIO) -> None:
    header = result.header or (tuple(result.records[0]) if result.records else ())
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for record in result.records:
        writer.writerow([_cell(record.get(name)) for name in header])


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def write_json(result: ServiceResult, stream: TextIO) -> None:
    document = {
        "command": result.command,
        "records": list(result.records),
        "summary": result.summary,
        "violations": result.violations,
    }
    json.dump(_json_safe(document), stream, indent=2)
    stream.write("\n")


def write_result(result: ServiceResult, stream: TextIO, fmt: str) -> None:
    (write_json if fmt == "json" else write_csv)(result, stream)
