from __future__ import annotations

import math

from rest_framework import serializers

from mainapps.estimator.constants import Q_UPPER, _get_q, _get_root_tol
from mainapps.hamiltonians.serializers import (
    ExtendedFloatField,
    HamiltonianSpecSerializer,
    PowerTermsField,
    StrictSerializer,
)
from mainapps.weyl_solver.solver import _get_eps


COMMANDS = ("estimate", "weyl", "bounds-check", "series-check", "spectral", "string", "sl", "sweep", "corpus")
FORMATS = ("csv", "json")
SUBJECTS = {
    "estimate": "hamiltonian",
    "weyl": "hamiltonian",
    "bounds-check": "hamiltonian",
    "series-check": "hamiltonian",
    "spectral": "hamiltonian",
    "sweep": "hamiltonian",
    "string": "string",
    "sl": "sl",
    "corpus": None,
}
DEFAULT_ANGLES = [math.pi / 4, math.pi / 2, 3 * math.pi / 4]


class GridSerializer(StrictSerializer):
    r_min = serializers.FloatField(default=1.0)
    r_max = serializers.FloatField(default=1000.0)
    points = serializers.IntegerField(default=12, min_value=1)
    geometric = serializers.BooleanField(default=True)

    def validate_r_min(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("r_min must be positive.")
        return value

    def validate(self, attrs):
        if attrs["r_max"] < attrs["r_min"] or (attrs["points"] > 1 and attrs["r_max"] == attrs["r_min"]):
            raise serializers.ValidationError({"r_max": ["The grid must be strictly increasing."]})
        return attrs


class StringSpecSerializer(StrictSerializer):
    length = ExtendedFloatField(default=math.inf)
    mass = PowerTermsField(required=False)
    knots = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    values = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    left_limits = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    tail_slope = serializers.FloatField(required=False, min_value=0.0)

    def validate_length(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("The string length must be positive.")
        return value

    def validate(self, attrs):
        if ("mass" in attrs) == ("knots" in attrs):
            raise serializers.ValidationError({"mass": ["Give either power terms or knots and values."]})
        if "knots" in attrs and len(attrs.get("values", ())) != len(attrs["knots"]):
            raise serializers.ValidationError({"values": ["One value per knot is required."]})
        return attrs


class SLSpecSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=("free", "bump"), default="free")
    height = serializers.FloatField(default=1.0, min_value=0.0)
    width = serializers.FloatField(default=1.0)
    start = serializers.FloatField(default=1.0, min_value=0.0)
    kappa = serializers.FloatField(default=0.1)
    lambda0 = serializers.FloatField(default=-1.0)
    x0 = serializers.FloatField(default=0.5)

    def validate_kappa(self, value):
        if not 0.0 < 2.0 * value < Q_UPPER:
            raise serializers.ValidationError(f"kappa must lie in (0, {Q_UPPER / 2:.6f}).")
        return value

    def validate_width(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("The bump width must be positive.")
        return value

    def validate_x0(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("x0 must be positive.")
        return value


class ComparisonFunctionSerializer(StrictSerializer):
    """g(r) = r**alpha log(e + r)**beta."""

    alpha = serializers.FloatField(default=1.0, min_value=0.0, max_value=2.0)
    beta = serializers.FloatField(default=0.0)


class RunConfigSerializer(StrictSerializer):
    command = serializers.ChoiceField(choices=COMMANDS)
    hamiltonian = HamiltonianSpecSerializer(required=False)
    string = StringSpecSerializer(required=False)
    sl = SLSpecSerializer(required=False)
    g = ComparisonFunctionSerializer(required=False)
    grid = GridSerializer(required=False)
    angles = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    q = serializers.FloatField(required=False)
    eps = serializers.FloatField(required=False)
    root_tol = serializers.FloatField(required=False)
    series_order = serializers.IntegerField(default=8, min_value=1)
    out = serializers.CharField(required=False, allow_null=True, default=None)
    format = serializers.ChoiceField(choices=FORMATS, default="csv")

    def validate_q(self, value):
        if not 0.0 < value < Q_UPPER:
            raise serializers.ValidationError(f"q must lie in (0, {Q_UPPER:.6f}).")
        return value

    def validate_eps(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("eps must be positive.")
        return value

    def validate_root_tol(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("root_tol must be positive.")
        return value

    def validate(self, attrs):
        command = attrs["command"]
        given = [key for key in ("hamiltonian", "string", "sl") if key in attrs]
        subject = SUBJECTS[command]
        if subject is None and given:
            raise serializers.ValidationError({given[0]: [f"'{command}' takes no subject."]})
        if subject is not None and given != [subject]:
            key = next((k for k in given if k != subject), subject)
            raise serializers.ValidationError({key: [f"'{command}' needs exactly one '{subject}' block."]})

        limit = 2.0 * math.pi if command == "sl" else math.pi
        for angle in attrs.get("angles", ()):
            if not 0.0 < angle < limit:
                raise serializers.ValidationError({"angles": [f"Angles must lie in (0, {limit:.6f})."]})

        attrs.setdefault("angles", list(DEFAULT_ANGLES))
        attrs.setdefault("grid", GridSerializer(data={}).run_validation({}))
        attrs.setdefault("g", ComparisonFunctionSerializer().run_validation({}))
        if "q" not in attrs:
            attrs["q"] = self.validate_q(_get_q())
        attrs.setdefault("eps", _get_eps())
        attrs.setdefault("root_tol", _get_root_tol())
        return attrs
