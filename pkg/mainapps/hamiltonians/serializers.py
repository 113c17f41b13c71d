from __future__ import annotations

import math

from rest_framework import serializers

from core.errors import CanonicalWeylError

from .corpus import FIXTURES, diagonal, get_fixture
from .hamiltonian import Hamiltonian, PiecewiseConstantHamiltonian, PowerPrimitiveHamiltonian


class ExtendedFloatField(serializers.Field):
    """A float that may be +-inf, as YAML writes .inf."""

    default_error_messages = {"invalid": "A number is required."}

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail("invalid")
        try:
            value = float(data)
        except (TypeError, ValueError):
            self.fail("invalid")
        if math.isnan(value):
            self.fail("invalid")
        return value

    def to_representation(self, value):
        return float(value)


class PowerTermsField(serializers.ListField):
    """[[coefficient, exponent], ...] with positive exponents."""

    child = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)

    def to_internal_value(self, data):
        terms = super().to_internal_value(data)
        for coefficient, exponent in terms:
            if exponent <= 0.0:
                raise serializers.ValidationError(f"Exponents must be positive, got {exponent}.")
        return [[float(c), float(e)] for c, e in terms]


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown key."] for key in unknown})
        return super().to_internal_value(data)


class HamiltonianSpecSerializer(StrictSerializer):
    KINDS = ("corpus", "piecewise", "powers", "diagonal")

    kind = serializers.ChoiceField(choices=KINDS)
    name = serializers.CharField(required=False)
    panels = serializers.ListField(
        child=serializers.ListField(child=ExtendedFloatField(), min_length=5, max_length=5),
        required=False,
        min_length=1,
    )
    m1 = PowerTermsField(required=False)
    m2 = PowerTermsField(required=False)
    m3 = PowerTermsField(required=False)
    start = serializers.FloatField(required=False, default=0.0)
    h1 = serializers.FloatField(required=False, min_value=0.0)
    h2 = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, attrs):
        kind = attrs["kind"]
        required = {"corpus": ("name",), "piecewise": ("panels",), "powers": ("m1", "m2"), "diagonal": ("h1", "h2")}
        for key in required[kind]:
            if key not in attrs:
                raise serializers.ValidationError({key: [f"Required for kind '{kind}'."]})
        if kind == "corpus" and attrs["name"] not in FIXTURES:
            raise serializers.ValidationError({"name": [f"Unknown fixture; choose from {', '.join(sorted(FIXTURES))}."]})
        if kind == "piecewise":
            for index, row in enumerate(attrs["panels"]):
                if not row[0] < row[1]:
                    raise serializers.ValidationError({"panels": [f"Panel {index} is empty."]})
        try:
            attrs["hamiltonian"] = build_hamiltonian(attrs)
        except CanonicalWeylError as exc:
            raise serializers.ValidationError({"kind": [exc.message]}) from exc
        return attrs


def build_hamiltonian(spec: dict) -> Hamiltonian:
    kind = spec["kind"]
    if kind == "corpus":
        return get_fixture(spec["name"])
    if kind == "piecewise":
        return PiecewiseConstantHamiltonian.from_rows(spec["panels"], name=spec.get("name", ""))
    if kind == "powers":
        return PowerPrimitiveHamiltonian(
            spec["m1"], spec["m2"], spec.get("m3", ()), start=spec.get("start", 0.0), name=spec.get("name", "")
        )
    return diagonal(spec["h1"], spec["h2"])


def hamiltonian_spec(attrs: dict) -> dict:
    """The declared keys of a validated hamiltonian block, without the built Hamiltonian."""
    return {key: value for key, value in attrs.items() if key != "hamiltonian"}
