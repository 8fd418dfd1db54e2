import math
from dataclasses import replace

from ...field_core import superpose
from ...serializers import VoltageSetSerializer
from ...trap_analysis import find_minimum, micromotion_amplitude, rf_nil, secular_analysis
from ...voltage_solver import FREQUENCY_TOLERANCE, compensate, solve_confinement
from ..base import TrapCommand, float_triple


class Command(TrapCommand):
    help = 'Solve DC voltages for axial confinement, optionally compensating a stray field'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--axial-frequency-hz',
            type=float,
            help='Target axial frequency in Hz (default: from config)',
        )
        parser.add_argument(
            '--target',
            type=str,
            help="Target position 'x,y,z' in metres (default: the RF nil at z = 0)",
        )
        parser.add_argument(
            '--allowed',
            type=str,
            help='Comma-separated electrodes allowed to vary (default: from config)',
        )
        parser.add_argument(
            '--bound-v',
            type=float,
            help='Voltage bound in volts (default: from config)',
        )
        parser.add_argument(
            '--unpaired',
            action='store_true',
            help='Let left and right segments of a pair take different voltages',
        )
        parser.add_argument(
            '--compensate',
            type=str,
            help="Stray field 'Ex,Ey,Ez' in V/m to cancel on top of the confinement set",
        )

    def run(self, **options):
        config = self.config
        layout = config.load_layout()
        spec = config.solve_spec
        if options['axial_frequency_hz'] is not None:
            spec = replace(spec, axial_frequency=2 * math.pi * options['axial_frequency_hz'])
        if options['target']:
            spec = replace(spec, target_position=float_triple(options['target']))
        if options['allowed']:
            spec = replace(spec, allowed=tuple(n.strip() for n in options['allowed'].split(',') if n.strip()))
        if options['bound_v'] is not None:
            spec = replace(spec, bound=options['bound_v'])
        if options['unpaired']:
            spec = replace(spec, pair_segments=False)

        self.stdout.write(f'Solving over {", ".join(spec.allowed)} within +/-{spec.bound} V...')
        volts = solve_confinement(layout, config.drive, config.ion, spec)
        payload = {'confinement': VoltageSetSerializer(volts).data}

        stray = spec.stray_field
        if options['compensate']:
            stray = float_triple(options['compensate'])
            volts = compensate(layout, config.drive, config.ion, stray, volts, spec)
            payload['compensated'] = VoltageSetSerializer(volts).data

        payload['check'] = {
            'target_axial_frequency_hz': spec.axial_frequency / (2 * math.pi),
            'max_abs_v': volts.max_abs(),
        }
        achieved = 0.0
        # A zero target leaves the axis unconfined, so there is no minimum to verify
        if spec.axial_frequency > 0:
            achieved = self.verify(layout, volts, spec, stray, payload['check'])
        self.emit_json('voltages', VoltageSetSerializer(volts).data)
        self.emit_csv('voltages', ['electrode', 'volts'], list(volts.items()))
        self.emit_json('solve_check', payload)
        for name, value in volts.items():
            self.stdout.write(f'  {name}: {value:+.4f} V')

        problems = []
        if volts.max_abs() > spec.bound:
            problems.append(f'max |V| = {volts.max_abs():.3f} V exceeds the {spec.bound} V bound')
        if spec.axial_frequency > 0 and abs(achieved / spec.axial_frequency - 1) > FREQUENCY_TOLERANCE:
            problems.append(f'achieved axial frequency {achieved / (2 * math.pi):.1f} Hz misses the target')
        if problems:
            for problem in problems:
                self.stdout.write(self.style.ERROR(problem))
            self.fail(f'{len(problems)} solution checks failed')
        self.stdout.write(self.style.SUCCESS(
            f'Solved: axial {achieved / (2 * math.pi) / 1e6:.4f} MHz, max |V| {volts.max_abs():.3f} V'))

    def verify(self, layout, volts, spec, stray, check):
        """Relocate the minimum of the solved set; returns the achieved axial frequency."""
        config = self.config
        seed = spec.target_position or rf_nil(layout, config.drive, config.ion).as_array()
        r0 = find_minimum(layout, config.drive, volts, config.ion, seed, stray)
        report = secular_analysis(layout, config.drive, volts, config.ion, r0, stray)
        _, rf_field, _ = superpose(layout, {n: config.drive.amplitude for n in layout.rf_names}, r0)
        nil = rf_nil(layout, config.drive, config.ion, z=r0.z, seed_height=r0.y, seed_x=r0.x)
        micromotion = micromotion_amplitude(report, r0.as_array() - nil.as_array())
        check.update({
            'minimum_m': list(r0.as_array()),
            'axial_frequency_hz': report.axial_frequency / (2 * math.pi),
            'rf_field_at_minimum_v_per_m': float(sum(e * e for e in rf_field) ** 0.5),
            'micromotion_amplitude_m': [float(v) for v in micromotion],
        })
        return report.axial_frequency
