import math
from pathlib import Path

import numpy as np

from ... import circuits
from ...exceptions import ConfigError
from ...serializers import CircuitSpecSerializer
from ...utils import read_json, validated
from ..base import TrapCommand


class Command(TrapCommand):
    help = 'Evaluate the RF resonator, pick-off divider and DC filters; emit Q(T) and Bode data'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--preset',
            choices=sorted(circuits.RESONATOR_PRESETS),
            default='paper-silicon',
            help='Resonator preset (default: paper-silicon)',
        )
        parser.add_argument(
            '--spec',
            type=str,
            help='Circuit spec JSON file used instead of the preset',
        )
        parser.add_argument(
            '--filter',
            choices=sorted(circuits.FILTER_PRESETS),
            default='onchip',
            help='DC filter preset for the Bode data (default: onchip)',
        )
        parser.add_argument(
            '--quality',
            type=float,
            help='Resonator Q for the power estimate (default: the model Q at 10 K)',
        )

    def run(self, **options):
        config = self.config
        if options['spec']:
            data = read_json(Path(options['spec']), 'circuit spec')
            serializer = validated(CircuitSpecSerializer, data, f"circuit spec {options['spec']}")
            try:
                model, temperatures = serializer.save()
            except Exception as exc:
                raise ConfigError(f"Invalid circuit spec {options['spec']}: {exc}") from exc
        else:
            model = circuits.RESONATOR_PRESETS[options['preset']]()
            temperatures = list(circuits.default_temperature_grid())

        rows = circuits.q_vs_temperature(model, temperatures)
        quality = options['quality'] or model.quality(10.0)
        power = circuits.power_dissipation(config.drive.amplitude, model.capacitance,
                                           config.drive.angular_frequency, quality)
        divider = circuits.paper_divider_check()
        spec = circuits.FILTER_PRESETS[options['filter']]
        frequencies = np.logspace(0, 6, 61)
        bode = circuits.bode_rows(spec, frequencies)

        payload = {
            'model': model.name,
            'inductance_h': model.inductance,
            'capacitance_f': model.capacitance,
            'participation': model.participation,
            'resonance_hz': model.resonance,
            'quality_at_295k': model.quality(295.0),
            'quality_at_10k': model.quality(10.0),
            'power_quality': quality,
            'power_dissipation_w': power,
            'divider': divider._asdict(),
            'filter': {
                'name': spec.name,
                'resistance_ohm': spec.resistance,
                'capacitance_f': spec.capacitance,
                'stages': spec.stages,
                'stage_cutoff_hz': spec.cutoff,
                'cascade_3db_hz': circuits.cascade_cutoff(spec),
                'approximation': circuits.TRANSFER_APPROXIMATION,
            },
            'matching_network': circuits.matching_network(),
            'q_vs_temperature': [{'temperature_k': t, 'q': q} for t, q in rows],
        }
        self.emit_json('circuit', payload)
        self.emit_csv('q_vs_temperature', ['temperature_k', 'q'], rows)
        self.emit_csv('filter_bode', ['frequency_hz', 'magnitude', 'db'], bode)

        self.stdout.write(f'  resonance: {model.resonance / 1e6:.3f} MHz')
        self.stdout.write(f'  Q(295 K) = {model.quality(295.0):.3g}, Q(10 K) = {model.quality(10.0):.4g}')
        self.stdout.write(f'  P_D at Q = {quality:.0f}: {power * 1e3:.2f} mW')
        self.stdout.write(f'  {spec.name} filter cutoff: {spec.cutoff:.4g} Hz ({spec.stages} stages)')
        if not divider.consistent:
            self.stdout.write(self.style.WARNING(
                f'  stated divider 1:{divider.stated_ratio:.0f} / {divider.stated_total * 1e12:.1f} pF does not '
                f'match its parts (parallel reading 1:{divider.parallel_ratio:.0f} / '
                f'{divider.parallel_total * 1e12:.2f} pF)'))

        values = [q for _, q in rows] + [power, model.resonance]
        if not all(math.isfinite(v) and v > 0 for v in values):
            self.fail('non-finite or non-positive circuit outputs')
        self.stdout.write(self.style.SUCCESS('Circuit evaluation completed'))
