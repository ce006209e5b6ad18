import io
import math
from pathlib import Path

from rest_framework import serializers
from rest_framework.exceptions import ParseError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from . import __version__
from .censored import OutcomeKind, classify
from .exceptions import DataFormatError, PsrError
from .services.basis import BASES, TRANSFORMS, BasisSpec
from .services.distributions import AftSpec, FamilyKind, LifetimeDistribution
from .services.fitting import FitOptions, FittedModel, Optimizer, parameter_vector
from .services.schemes import (
    PRESETS,
    CountDistribution,
    CountKind,
    GapDistribution,
    GapKind,
    InspectionScheme,
    preset_scheme,
)

MODEL_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


class EnumField(serializers.ChoiceField):
    def __init__(self, enum, **kwargs):
        self.enum = enum
        super().__init__(choices=[member.value for member in enum], **kwargs)

    def to_representation(self, value):
        if value is None:
            return None
        return self.enum(value).value

    def to_internal_value(self, data):
        return self.enum(super().to_internal_value(data))


class ExtendedFloatField(serializers.FloatField):
    """Float that writes infinities as ``null`` and reads ``null`` back as ``missing_as``."""

    def __init__(self, missing_as=math.inf, **kwargs):
        self.missing_as = missing_as
        kwargs.setdefault("allow_null", True)
        super().__init__(**kwargs)

    def to_representation(self, value):
        if value is None:
            return None
        value = float(value)
        return value if math.isfinite(value) else None

    def validate_empty_values(self, data):
        if data is None:
            return True, self.missing_as
        return super().validate_empty_values(data)


def render_json(data) -> bytes:
    return JSONRenderer().render(data, renderer_context={"indent": 2}) + b"\n"


def write_json(data, path) -> Path:
    path = Path(path)
    path.write_bytes(render_json(data))
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"missing file: {path}")
    try:
        return JSONParser().parse(io.BytesIO(path.read_bytes()))
    except ParseError as exc:
        raise DataFormatError(f"invalid JSON in {path}: {exc.detail}") from None


def _validated(serializer: serializers.Serializer, what: str):
    if not serializer.is_valid():
        raise DataFormatError(f"invalid {what}", errors=serializer.errors)
    return serializer.save()


# Dataset -----------------------------------------------------------------


class OutcomeSerializer(serializers.Serializer):
    kind = EnumField(OutcomeKind)
    t = ExtendedFloatField(missing_as=None, required=False)
    l = serializers.FloatField()
    u = ExtendedFloatField()


class ObservationSerializer(serializers.Serializer):
    id = serializers.CharField()
    outcome_class = serializers.SerializerMethodField()
    outcome = OutcomeSerializer()
    covariates = serializers.ListField(child=serializers.FloatField())
    stratum = serializers.CharField(allow_null=True)

    def get_outcome_class(self, obj):
        return classify(obj.outcome).value


class DatasetSerializer(serializers.Serializer):
    covariate_names = serializers.ListField(child=serializers.CharField())
    observations = ObservationSerializer(many=True)


# Fitted model ------------------------------------------------------------


class AftSpecSerializer(serializers.Serializer):
    family = EnumField(FamilyKind)
    mu = serializers.FloatField()
    beta = serializers.ListField(child=serializers.FloatField())
    sigma = serializers.FloatField()
    strata_offsets = serializers.DictField(child=serializers.FloatField(), required=False)

    def validate(self, attrs):
        try:
            return AftSpec(**attrs)
        except PsrError as exc:
            raise serializers.ValidationError(exc.message) from None


class FitOptionsSerializer(serializers.Serializer):
    max_iterations = serializers.IntegerField(min_value=1)
    rel_tol = serializers.FloatField()
    gradient_tol = serializers.FloatField()
    optimizer = EnumField(Optimizer)
    analytic_gradient = serializers.BooleanField(default=True)

    def validate(self, attrs):
        try:
            return FitOptions(**attrs)
        except PsrError as exc:
            raise serializers.ValidationError(exc.message) from None


class BasisSpecSerializer(serializers.Serializer):
    column = serializers.CharField()
    transform = serializers.ChoiceField(choices=TRANSFORMS)
    basis = serializers.ChoiceField(choices=BASES)
    knots = serializers.ListField(child=serializers.FloatField(), required=False)

    def validate(self, attrs):
        knots = tuple(attrs.get("knots", ()))
        if attrs["basis"] != "linear" and not knots:
            raise serializers.ValidationError(f"basis {attrs['basis']} needs knots")
        return BasisSpec(column=attrs["column"], transform=attrs["transform"], basis=attrs["basis"], knots=knots)


class ConvergenceSerializer(serializers.Serializer):
    converged = serializers.BooleanField()
    iterations = serializers.IntegerField(min_value=0)
    gradient_norm = ExtendedFloatField()
    message = serializers.CharField(allow_blank=True, default="")


class FittedModelSerializer(serializers.Serializer):
    schema_version = serializers.SerializerMethodField()
    version = serializers.SerializerMethodField()
    spec = AftSpecSerializer()
    parameter_vector = serializers.SerializerMethodField()
    covariate_names = serializers.ListField(child=serializers.CharField())
    strata_column = serializers.CharField(allow_null=True, required=False, default=None)
    basis = BasisSpecSerializer(many=True, required=False)
    loglik = serializers.FloatField()
    convergence = ConvergenceSerializer(source="*")
    options = FitOptionsSerializer()
    n_observations = serializers.IntegerField(min_value=0, default=0)

    def get_schema_version(self, obj):
        return MODEL_SCHEMA_VERSION

    def get_version(self, obj):
        return __version__

    def get_parameter_vector(self, obj):
        return [float(value) for value in parameter_vector(obj.spec)]

    def validate(self, attrs):
        declared = self.initial_data.get("schema_version", MODEL_SCHEMA_VERSION)
        if declared != MODEL_SCHEMA_VERSION:
            raise serializers.ValidationError(f"unsupported model schema version {declared!r}")
        if len(attrs["spec"].beta) != len(attrs["covariate_names"]):
            raise serializers.ValidationError("spec.beta and covariate_names differ in length")
        return attrs

    def create(self, validated_data):
        validated_data["covariate_names"] = tuple(validated_data["covariate_names"])
        validated_data["basis"] = tuple(validated_data.get("basis", ()))
        return FittedModel(**validated_data)


def save_model(model: FittedModel, path) -> Path:
    return write_json(FittedModelSerializer(model).data, path)


def load_model(path) -> FittedModel:
    payload = read_json(path)
    if not isinstance(payload, dict):
        raise DataFormatError("model file must hold a JSON object")
    return _validated(FittedModelSerializer(data=payload), "model file")


# Inspection schemes ------------------------------------------------------


class CountDistributionSerializer(serializers.Serializer):
    kind = EnumField(CountKind)
    k = serializers.IntegerField(min_value=1, required=False)
    mean = serializers.FloatField(min_value=1.0, required=False)
    values = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False)
    weights = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False)

    def validate(self, attrs):
        attrs = dict(attrs)
        attrs["values"] = tuple(attrs.get("values", ()))
        attrs["weights"] = tuple(attrs.get("weights", ()))
        try:
            return CountDistribution(**attrs)
        except PsrError as exc:
            raise serializers.ValidationError(exc.message) from None

    def to_representation(self, instance):
        return instance.to_dict()


class GapDistributionSerializer(serializers.Serializer):
    kind = EnumField(GapKind)
    tau = serializers.FloatField(required=False)
    dist = EnumField(FamilyKind, required=False)
    params = serializers.DictField(child=serializers.FloatField(), required=False)

    def validate(self, attrs):
        try:
            if attrs["kind"] is GapKind.LIFETIME:
                if "dist" not in attrs:
                    raise serializers.ValidationError("lifetime gaps need 'dist'")
                lifetime = LifetimeDistribution.from_parameters(attrs["dist"], **attrs.get("params", {}))
                return GapDistribution(GapKind.LIFETIME, lifetime=lifetime)
            return GapDistribution(attrs["kind"], tau=attrs.get("tau", 1.0))
        except PsrError as exc:
            raise serializers.ValidationError(exc.message) from None

    def to_representation(self, instance):
        return instance.to_dict()


class InspectionSchemeSerializer(serializers.Serializer):
    """
    A canonical preset (``s1``..``s6``) with optional gap/count overrides,
    or a full custom description with ``k_dist``, ``gap_dist`` and ``pi``.
    """

    preset = serializers.ChoiceField(choices=PRESETS, required=False, allow_null=True)
    label = serializers.CharField(required=False)
    k_dist = CountDistributionSerializer(required=False)
    gap_dist = GapDistributionSerializer(required=False)
    pi = serializers.ListField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0), required=False, min_length=1
    )

    def validate(self, attrs):
        try:
            return {"scheme": self.build_scheme(attrs)}
        except PsrError as exc:
            raise serializers.ValidationError(exc.message) from None

    def build_scheme(self, attrs) -> InspectionScheme:
        if attrs.get("preset"):
            scheme = preset_scheme(attrs["preset"], gap_dist=attrs.get("gap_dist"), k_dist=attrs.get("k_dist"))
            if "pi" in attrs and tuple(attrs["pi"]) != scheme.pi:
                raise serializers.ValidationError(f"preset {scheme.preset} fixes pi = {list(scheme.pi)}")
            if "label" in attrs:
                scheme = InspectionScheme(scheme.k_dist, scheme.gap_dist, scheme.pi, scheme.preset, attrs["label"])
            return scheme
        missing = [name for name in ("k_dist", "gap_dist", "pi") if name not in attrs]
        if missing:
            raise serializers.ValidationError(f"custom scheme needs {', '.join(missing)}")
        return InspectionScheme(
            k_dist=attrs["k_dist"],
            gap_dist=attrs["gap_dist"],
            pi=tuple(attrs["pi"]),
            label=attrs.get("label", "custom"),
        )

    def create(self, validated_data):
        return validated_data["scheme"]

    def to_representation(self, instance):
        return instance.to_dict()


# Reports -----------------------------------------------------------------


class IntervalTermSerializer(serializers.Serializer):
    index = serializers.IntegerField()
    p = serializers.FloatField()
    r = serializers.FloatField()
    v = serializers.FloatField()
    pi = serializers.FloatField()
    contribution = serializers.FloatField()


class SchemeMomentsSerializer(serializers.Serializer):
    schema_version = serializers.SerializerMethodField()
    scheme = serializers.CharField()
    mean = serializers.FloatField()
    variance = serializers.FloatField()
    standard_error = serializers.FloatField()
    method = serializers.CharField()
    draws = serializers.IntegerField()
    seed = serializers.IntegerField(allow_null=True)
    per_interval_terms = IntervalTermSerializer(many=True)

    def get_schema_version(self, obj):
        return REPORT_SCHEMA_VERSION


class MomentReportSerializer(serializers.Serializer):
    schema_version = serializers.SerializerMethodField()
    scheme = serializers.CharField()
    n = serializers.IntegerField()
    seed = serializers.IntegerField()
    theoretical_mean = serializers.FloatField()
    empirical_mean = serializers.FloatField()
    mean_standard_error = ExtendedFloatField()
    mean_z = ExtendedFloatField()
    theoretical_variance = serializers.FloatField()
    theoretical_standard_error = serializers.FloatField()
    empirical_variance = serializers.FloatField()
    variance_standard_error = ExtendedFloatField()
    variance_z = ExtendedFloatField()
    agrees = serializers.BooleanField()
    ks_vs_uniform = ExtendedFloatField(missing_as=None)
    moments = SchemeMomentsSerializer()

    def get_schema_version(self, obj):
        return REPORT_SCHEMA_VERSION


class TrendDataSerializer(serializers.Serializer):
    schema_version = serializers.SerializerMethodField()
    covariate = serializers.CharField()
    span = serializers.FloatField()
    neighbors = serializers.IntegerField()
    sigma = serializers.FloatField()
    band_z = serializers.SerializerMethodField()
    points = serializers.SerializerMethodField()
    curve = serializers.SerializerMethodField()

    def get_schema_version(self, obj):
        return REPORT_SCHEMA_VERSION

    def get_band_z(self, obj):
        from .services.diagnostics import BAND_Z

        return BAND_Z

    def get_points(self, obj):
        return [
            {"x": float(x), "psr": float(psr), "class": outcome_class.value}
            for x, psr, outcome_class in zip(obj.x, obj.psr, obj.classes)
        ]

    def get_curve(self, obj):
        return [
            {"x": float(x), "fitted": float(fitted), "standard_error": float(se), "half_width": float(half)}
            for x, fitted, se, half in zip(obj.grid, obj.fitted, obj.standard_error, obj.half_width)
        ]


class LimitRowSerializer(serializers.Serializer):
    lam = serializers.FloatField()
    tau = serializers.FloatField()
    sup_distance = serializers.FloatField()


class LimitReportSerializer(serializers.Serializer):
    schema_version = serializers.SerializerMethodField()
    rows = LimitRowSerializer(many=True)
    decreasing = serializers.BooleanField()

    def get_schema_version(self, obj):
        return REPORT_SCHEMA_VERSION
