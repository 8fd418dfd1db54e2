import math
from collections.abc import Mapping

from rest_framework import serializers

from .circuits import (ResonatorModel, conductivity_inductor_q, constant_loss_tangent,
                       default_temperature_grid, freeze_out_loss_tangent)
from .exceptions import CircuitError, GeometryError
from .geometry import SPLIT_GAP, ElectrodeRole, Rect, layout_from_rects
from .thermometry import Sideband
from .trap_analysis import check_report
from .voltage_solver import VoltageSet


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields, listing the valid ones."""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({
                    'non_field_errors': [
                        f"Unknown keys: {', '.join(unknown)}. Valid keys: {', '.join(sorted(self.fields))}"
                    ]
                })
        return super().to_internal_value(data)


class RectField(serializers.Field):
    """[x_min, x_max, z_min, z_max] in metres <-> Rect"""

    default_error_messages = {
        'invalid': 'Rectangles are lists of four numbers [x_min, x_max, z_min, z_max].',
    }

    def to_representation(self, value):
        return [float(v) for v in value.bounds]

    def to_internal_value(self, data):
        if not isinstance(data, (list, tuple)) or len(data) != 4:
            self.fail('invalid')
        try:
            values = [float(v) for v in data]
        except (TypeError, ValueError):
            self.fail('invalid')
        try:
            return Rect(*values)
        except GeometryError as exc:
            raise serializers.ValidationError(str(exc))


class ElectrodeSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=100)
    role = serializers.ChoiceField(choices=[role.value for role in ElectrodeRole])
    rects = serializers.ListField(child=RectField(), allow_empty=True)


class LayoutSerializer(StrictSerializer):
    gap_policy = serializers.CharField(default=SPLIT_GAP)
    electrodes = ElectrodeSerializer(many=True)

    def validate_electrodes(self, value):
        if not value:
            raise serializers.ValidationError("A layout needs at least one electrode")
        return value

    def create(self, validated_data):
        spec = [
            (e['name'], e['role'], [rect.bounds for rect in e['rects']])
            for e in validated_data['electrodes']
        ]
        return layout_from_rects(spec, validated_data['gap_policy'])


class LayoutViolationSerializer(serializers.Serializer):
    rule = serializers.CharField()
    electrodes = serializers.ListField(child=serializers.CharField())
    message = serializers.CharField()


class VoltageSetSerializer(StrictSerializer):
    volts = serializers.DictField(child=serializers.FloatField())

    def validate_volts(self, value):
        bad = sorted(name for name, v in value.items() if not math.isfinite(v))
        if bad:
            raise serializers.ValidationError(f"Non-finite voltages for {', '.join(bad)}")
        return value

    def to_representation(self, instance):
        # VoltageSet is itself a Mapping, so field lookup would index it by name
        if isinstance(instance, VoltageSet):
            instance = {'volts': instance.as_dict()}
        return super().to_representation(instance)

    def create(self, validated_data):
        return VoltageSet(validated_data['volts'])


class WaveformSerializer(serializers.Serializer):
    waypoints_m = serializers.ListField(child=serializers.FloatField(), source='waypoints')
    max_abs_v = serializers.SerializerMethodField()
    samples = serializers.SerializerMethodField()

    def get_max_abs_v(self, obj):
        return obj.max_abs()

    def get_samples(self, obj):
        return [{'time_s': t, 'volts': s.as_dict()} for t, s in zip(obj.times, obj.sets)]


class TrapReportSerializer(serializers.Serializer):
    position_m = serializers.ListField(child=serializers.FloatField(), source='position')
    ion_height_m = serializers.FloatField(source='ion_height')
    frequencies_rad_s = serializers.ListField(child=serializers.FloatField(), source='frequencies')
    frequencies_hz = serializers.SerializerMethodField()
    axial_frequency_hz = serializers.SerializerMethodField()
    principal_axes = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    tilt_deg = serializers.FloatField()
    q_matrix = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    q_max = serializers.FloatField()
    stable = serializers.BooleanField()
    imaginary = serializers.BooleanField()
    axial_index = serializers.IntegerField()
    rf_field_residual_v_per_m = serializers.FloatField(source='rf_field_residual')
    depth_ev = serializers.FloatField(source='depth', allow_null=True)
    escape_point_m = serializers.ListField(child=serializers.FloatField(), source='escape_point', allow_null=True)
    depth_bounded = serializers.BooleanField()
    rf_depth_ev = serializers.FloatField(source='rf_depth', allow_null=True)
    rf_escape_point_m = serializers.ListField(child=serializers.FloatField(), source='rf_escape_point',
                                              allow_null=True)
    problems = serializers.SerializerMethodField()

    def get_frequencies_hz(self, obj):
        return [f / (2 * math.pi) for f in obj.frequencies]

    def get_axial_frequency_hz(self, obj):
        return obj.axial_frequency / (2 * math.pi)

    def get_problems(self, obj):
        return check_report(obj)


class CircuitSpecSerializer(StrictSerializer):
    name = serializers.CharField(default='custom')
    inductance_h = serializers.FloatField(min_value=0)
    capacitance_f = serializers.FloatField(min_value=0)
    participation = serializers.FloatField(min_value=0, max_value=1)
    loss_tangent_295k = serializers.FloatField(min_value=0)
    activation_temperature_k = serializers.FloatField(required=False, allow_null=True, min_value=0)
    inductor_q_295k = serializers.FloatField(min_value=0)
    inductor_q_10k = serializers.FloatField(min_value=0)
    temperatures_k = serializers.ListField(child=serializers.FloatField(min_value=0), required=False,
                                           allow_empty=False)

    def create(self, validated_data):
        """Returns: (ResonatorModel, temperature grid)"""
        activation = validated_data.get('activation_temperature_k')
        if activation is None:
            loss_tangent = constant_loss_tangent(validated_data['loss_tangent_295k'])
        else:
            loss_tangent = freeze_out_loss_tangent(validated_data['loss_tangent_295k'], activation)
        try:
            model = ResonatorModel(
                inductance=validated_data['inductance_h'],
                capacitance=validated_data['capacitance_f'],
                inductor_q=conductivity_inductor_q(validated_data['inductor_q_295k'],
                                                   validated_data['inductor_q_10k']),
                participation=validated_data['participation'],
                loss_tangent=loss_tangent,
                name=validated_data['name'],
            )
        except CircuitError as exc:
            raise serializers.ValidationError(str(exc))
        temperatures = validated_data.get('temperatures_k')
        if temperatures is None:
            temperatures = list(default_temperature_grid())
        return model, temperatures


class IonSerializer(StrictSerializer):
    name = serializers.CharField(default='custom')
    mass_u = serializers.FloatField(min_value=0)
    charge_e = serializers.FloatField()
    wavelength_m = serializers.FloatField(min_value=0)
    beam_angle_deg = serializers.FloatField()

    def validate_charge_e(self, value):
        if value == 0:
            raise serializers.ValidationError("Ion charge must be non-zero")
        return value


FORMAT_CHOICES = ['json', 'csv', 'both']


class RunConfigSerializer(StrictSerializer):
    """
    Run configuration file schema. Every key is optional; missing keys take
    the TRAP_DEFAULTS values. Physical quantities are SI with the unit in
    the key name.
    """
    layout = serializers.ChoiceField(choices=['paper', 'symmetric'], required=False)
    layout_file = serializers.CharField(required=False)
    amplitude_v = serializers.FloatField(required=False, min_value=0)
    frequency_hz = serializers.FloatField(required=False, min_value=0)
    ion = serializers.CharField(required=False)
    ion_params = IonSerializer(required=False)
    axial_frequency_hz = serializers.FloatField(required=False, min_value=0)
    bound_v = serializers.FloatField(required=False, min_value=0)
    allowed = serializers.ListField(child=serializers.CharField(), required=False, allow_empty=False)
    regularization = serializers.FloatField(required=False, min_value=0)
    pair_segments = serializers.BooleanField(required=False)
    max_refinements = serializers.IntegerField(required=False, min_value=0)
    stray_field_v_per_m = serializers.ListField(child=serializers.FloatField(), required=False,
                                                min_length=3, max_length=3)
    seed_height_m = serializers.FloatField(required=False, min_value=0)
    depth_box_m = serializers.FloatField(required=False, min_value=0)
    output_dir = serializers.CharField(required=False)
    formats = serializers.ChoiceField(choices=FORMAT_CHOICES, required=False)
    seed = serializers.IntegerField(required=False, min_value=0)
    montecarlo_runs = serializers.IntegerField(required=False, min_value=1)

    def validate(self, attrs):
        if 'layout' in attrs and 'layout_file' in attrs:
            raise serializers.ValidationError(
                "Conflicting layout sources: give either 'layout' or 'layout_file', not both")
        if 'ion' in attrs and 'ion_params' in attrs:
            raise serializers.ValidationError(
                "Conflicting ion sources: give either 'ion' or 'ion_params', not both")
        for key in ('amplitude_v', 'frequency_hz', 'bound_v', 'seed_height_m', 'depth_box_m'):
            if key in attrs and not attrs[key] > 0:
                raise serializers.ValidationError({key: "Must be positive"})
        return attrs


class SignalRowSerializer(serializers.Serializer):
    """One row of a sideband-signal CSV."""
    duration_s = serializers.FloatField(min_value=0)
    probability = serializers.FloatField(min_value=0, max_value=1)
    sigma = serializers.FloatField(required=False, allow_null=True, min_value=0)


class SignalMetaSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[s.value for s in Sideband], default=Sideband.BLUE.value)
    carrier_rabi_rad_s = serializers.FloatField(min_value=0)
    eta = serializers.FloatField(min_value=0)


class HeatingRowSerializer(serializers.Serializer):
    """One row of a heating-series CSV."""
    wait_s = serializers.FloatField(min_value=0)
    nbar = serializers.FloatField()
    sigma = serializers.FloatField(min_value=0)


class HeatingResultSerializer(serializers.Serializer):
    rate_phonons_per_s = serializers.FloatField(source='rate')
    rate_error = serializers.FloatField()
    intercept = serializers.FloatField()
    intercept_error = serializers.FloatField()
    noise_density_v2_m2_hz = serializers.FloatField(source='noise_density', allow_null=True)
    noise_density_error = serializers.FloatField(allow_null=True)
    residuals = serializers.ListField(child=serializers.FloatField())


class NoiseRowSerializer(serializers.Serializer):
    trap = serializers.IntegerField()
    rate_phonons_per_s = serializers.FloatField(source='rate')
    rate_error = serializers.FloatField()
    axial_frequency_hz = serializers.FloatField()
    noise_density_v2_m2_hz = serializers.FloatField(source='noise_density')
    noise_density_error = serializers.FloatField()
