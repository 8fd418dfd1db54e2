import math

from ...constants import SEGMENT_PITCH
from ...field_core import FieldPoint
from ...serializers import WaveformSerializer
from ...tasks import dispatch_shuttle
from ...trap_analysis import find_minimum, secular_analysis
from ...voltage_solver import shuttle_spec
from ..base import TrapCommand

POSITION_TOLERANCE = 1e-6       # m
FREQUENCY_DRIFT = 0.05


class Command(TrapCommand):
    help = 'Compute an axial shuttling waveform between two positions and verify every step'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--from-z',
            type=float,
            default=0.0,
            help='Start position in metres (default: 0)',
        )
        parser.add_argument(
            '--to-z',
            type=float,
            default=SEGMENT_PITCH,
            help=f'End position in metres (default: one segment pitch, {SEGMENT_PITCH})',
        )
        parser.add_argument(
            '--steps',
            type=int,
            default=5,
            help='Number of waypoints including both ends (default: 5)',
        )

    def run(self, **options):
        config = self.config
        layout = config.load_layout()
        spec = shuttle_spec(config.solve_spec, layout)
        self.stdout.write(f"Shuttling {options['from_z'] * 1e6:.1f} -> {options['to_z'] * 1e6:.1f} um "
                          f"in {options['steps']} steps...")
        waveform = dispatch_shuttle(layout, config.drive, config.ion, options['from_z'], options['to_z'],
                                    options['steps'], spec)

        problems, steps = [], []
        for k, (z, volts) in enumerate(zip(waveform.waypoints, waveform.sets)):
            r0 = find_minimum(layout, config.drive, volts, config.ion,
                              FieldPoint(0.0, config.seed_height, z), spec.stray_field)
            report = secular_analysis(layout, config.drive, volts, config.ion, r0, spec.stray_field)
            offset = abs(r0.z - z)
            drift = abs(report.axial_frequency / spec.axial_frequency - 1) if spec.axial_frequency else 0.0
            steps.append({'waypoint_m': z, 'minimum_m': list(r0.as_array()),
                          'axial_frequency_hz': report.axial_frequency / (2 * math.pi)})
            self.stdout.write(f'  step {k}: z = {z * 1e6:.2f} um, minimum at {r0.z * 1e6:.3f} um, '
                              f'axial {report.axial_frequency / (2 * math.pi) / 1e6:.4f} MHz')
            if offset > POSITION_TOLERANCE:
                problems.append(f'step {k}: minimum {offset * 1e6:.3f} um from its waypoint')
            if drift > FREQUENCY_DRIFT:
                problems.append(f'step {k}: axial frequency drifted by {drift:.1%}')

        self.emit_json('waveform', {**WaveformSerializer(waveform).data, 'steps': steps})
        header, rows = waveform.to_rows()
        self.emit_csv('waveform', header, rows)

        if problems:
            for problem in problems:
                self.stdout.write(self.style.ERROR(problem))
            self.fail(f'{len(problems)} waveform steps failed verification')
        self.stdout.write(self.style.SUCCESS(f'Waveform verified, max |V| {waveform.max_abs():.3f} V'))
