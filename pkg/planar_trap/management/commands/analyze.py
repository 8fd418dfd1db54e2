from ...field_core import FieldPoint
from ...serializers import TrapReportSerializer
from ...trap_analysis import analyze_trap, check_report, potential_line_scan
from ..base import TrapCommand, float_triple

AXES = {'x': 0, 'y': 1, 'z': 2}


class Command(TrapCommand):
    help = 'Find the trap minimum and report height, depth, secular frequencies, tilt and q-matrix'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--volts',
            type=str,
            help='Voltage-set JSON file for the DC electrodes (default: all DC at 0 V)',
        )
        parser.add_argument(
            '--seed-point',
            type=str,
            help="Starting point 'x,y,z' in metres (default: 0,<seed_height_m>,0)",
        )
        parser.add_argument(
            '--stray',
            type=str,
            help="Uniform stray field 'Ex,Ey,Ez' in V/m (default: from config)",
        )
        parser.add_argument(
            '--scan-axis',
            choices=['x', 'y', 'z', 'none'],
            default='y',
            help='Axis of the potential line scan written as CSV (default: y)',
        )
        parser.add_argument(
            '--scan-half-width',
            type=float,
            default=200e-6,
            help='Half width of the line scan in metres (default: 200e-6)',
        )

    def run(self, **options):
        config = self.config
        layout = config.load_layout()
        volts = self.load_volts(options['volts'])
        stray = float_triple(options['stray']) if options['stray'] else config.solve_spec.stray_field
        if options['seed_point']:
            seed = FieldPoint(*float_triple(options['seed_point']))
        else:
            seed = FieldPoint(0.0, config.seed_height, 0.0)

        self.stdout.write(f'Analysing {config.layout_source} at {config.drive.amplitude} V, '
                          f'{config.drive.frequency_hz / 1e6:.3f} MHz...')
        report = analyze_trap(layout, config.drive, volts, config.ion, seed, stray, box=config.depth_box)
        payload = TrapReportSerializer(report).data
        self.emit_json('trap_report', payload)

        if options['scan_axis'] != 'none':
            half_width = options['scan_half_width']
            if options['scan_axis'] == 'y':
                half_width = min(half_width, 0.95 * report.ion_height)
            rows = potential_line_scan(layout, config.drive, volts, config.ion, report.position,
                                       axis=AXES[options['scan_axis']], half_width=half_width,
                                       stray_field=stray)
            self.emit_csv('potential_scan', ['offset_m', 'total_ev', 'pseudo_ev'], rows)

        self.stdout.write(f"  ion height: {report.ion_height * 1e6:.1f} um")
        self.stdout.write(f"  depth: {report.depth * 1e3:.2f} meV (RF only {report.rf_depth * 1e3:.2f} meV)")
        self.stdout.write(f"  frequencies: {', '.join(f'{f:.4g}' for f in payload['frequencies_hz'])} Hz")
        self.stdout.write(f"  tilt: {report.tilt_deg:.2f} deg, q_max {report.q_max:.4f}")

        problems = check_report(report)
        if report.imaginary:
            problems.append('non-confining curvature (imaginary secular frequency)')
        if not report.stable:
            problems.append(f'Mathieu q = {report.q_max:.3f} above the stability limit')
        if problems:
            for problem in problems:
                self.stdout.write(self.style.ERROR(problem))
            self.fail(f'{len(problems)} report invariant violations')
        self.stdout.write(self.style.SUCCESS('Analysis completed successfully!'))
