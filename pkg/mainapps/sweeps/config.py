from __future__ import annotations

from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from rest_framework.exceptions import ErrorDetail

from core.errors import CanonicalWeylError, ParseError, SchemaError
from mainapps.estimator.bounds import EstimatorConfig
from mainapps.hamiltonians.hamiltonian import Hamiltonian
from mainapps.hamiltonians.serializers import hamiltonian_spec
from mainapps.spectral.regvar import RegVarFunction
from mainapps.strings_sl.strings import KreinString
from mainapps.strings_sl.sturm_liouville import SLProblem

from .serializers import RunConfigSerializer


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    r_min: float
    r_max: float
    points: int
    geometric: bool = True

    def radii(self) -> tuple[float, ...]:
        if self.points == 1:
            return (self.r_min,)
        spacing = np.geomspace if self.geometric else np.linspace
        return tuple(float(r) for r in spacing(self.r_min, self.r_max, self.points))


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration with its subject already built."""

    command: str
    grid: Grid
    angles: tuple[float, ...]
    q: float
    eps: float
    root_tol: float
    series_order: int
    out: str | None
    format: str
    g: dict[str, float]
    raw: dict[str, Any] = field(repr=False)
    hamiltonian: Hamiltonian | None = None
    string: KreinString | None = None
    sl: SLProblem | None = None

    @property
    def estimator(self) -> EstimatorConfig:
        return EstimatorConfig(q=self.q, root_tol=self.root_tol)

    @property
    def kappa(self) -> float:
        return float(self.raw["sl"]["kappa"])

    def radii(self) -> tuple[float, ...]:
        return self.grid.radii()

    def comparison_function(self) -> RegVarFunction:
        alpha, beta = self.g["alpha"], self.g["beta"]
        if beta == 0.0:
            return RegVarFunction.power_function(alpha)
        return RegVarFunction.log_power(alpha, beta)

    def as_dict(self) -> dict[str, Any]:
        return _plain(self.raw)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    return float(value)


def _first_error(errors: Any, path: tuple[str, ...] = ()) -> tuple[str, str]:
    """Dotted key and message of the first leaf in a DRF error tree."""
    if isinstance(errors, dict):
        key, nested = next(iter(errors.items()))
        step = () if key == "non_field_errors" else (str(key),)
        return _first_error(nested, path + step)
    if isinstance(errors, list):
        for index, nested in enumerate(errors):
            if isinstance(nested, (ErrorDetail, str)):
                return ".".join(path), str(nested)
            if nested:
                return _first_error(nested, path + (str(index),))
    return ".".join(path), str(errors)


def parse_grid_flag(text: str) -> dict[str, Any]:
    """MIN:MAX:N as given on the command line."""
    parts = text.split(":")
    if len(parts) != 3:
        raise SchemaError(message=f"Expected MIN:MAX:N, got {text!r}.", key="grid")
    try:
        return {"r_min": float(parts[0]), "r_max": float(parts[1]), "points": int(parts[2])}
    except ValueError as exc:
        raise SchemaError(message=f"Expected MIN:MAX:N, got {text!r}.", key="grid") from exc


def parse_angles_flag(text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise SchemaError(message=f"Expected a comma separated list of angles, got {text!r}.", key="angles") from exc


def _load(text: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(
            message=f"Malformed configuration: {exc.problem or exc.context}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        ) from exc
    except yaml.YAMLError as exc:
        raise ParseError(message=f"Malformed configuration: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise SchemaError(message="The configuration must be a mapping.", key="")
    return data


def _build_string(spec: dict[str, Any]) -> KreinString:
    if "mass" in spec:
        return KreinString.power(spec["mass"], length=spec["length"])
    return KreinString.linear(
        spec["knots"],
        spec["values"],
        spec.get("left_limits"),
        tail_slope=spec.get("tail_slope", 0.0),
        length=spec["length"],
    )


def parse_config(text: str, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Validate a YAML run configuration; ``overrides`` replace top-level keys."""
    data = _load(text)
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})

    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        key, message = _first_error(serializer.errors)
        raise SchemaError(message=message, key=key, payload={"errors": _plain(serializer.errors)})
    attrs = dict(serializer.validated_data)

    hamiltonian = None
    if "hamiltonian" in attrs:
        hamiltonian = attrs["hamiltonian"]["hamiltonian"]
        attrs["hamiltonian"] = hamiltonian_spec(attrs["hamiltonian"])
    string = sl = None
    try:
        if "string" in attrs:
            string = _build_string(attrs["string"])
        if "sl" in attrs:
            sl = SLProblem.from_config(attrs["sl"])
    except CanonicalWeylError as exc:
        key = "string" if "string" in attrs else "sl"
        raise SchemaError(message=exc.message, key=key) from exc

    raw = _plain(attrs)
    grid = raw["grid"]
    cfg = RunConfig(
        command=raw["command"],
        grid=Grid(grid["r_min"], grid["r_max"], grid["points"], grid["geometric"]),
        angles=tuple(raw["angles"]),
        q=raw["q"],
        eps=raw["eps"],
        root_tol=raw["root_tol"],
        series_order=raw["series_order"],
        out=raw["out"],
        format=raw["format"],
        g=raw["g"],
        raw=raw,
        hamiltonian=hamiltonian,
        string=string,
        sl=sl,
    )
    logger.debug(f"Parsed '{cfg.command}' configuration with {cfg.grid.points} radii and {len(cfg.angles)} angles")
    return cfg


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(message=f"Cannot read configuration {path}: {exc.strerror}") from exc
    return parse_config(text, overrides)


def serialize(cfg: RunConfig) -> str:
    """The normalized YAML form: every default spelled out, keys in schema order."""
    return yaml.safe_dump(cfg.as_dict(), sort_keys=False, default_flow_style=None)
