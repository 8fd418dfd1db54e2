from ...field_core import sample_grid
from ..base import TrapCommand, grid_axis

HEADER = ['x', 'y', 'z', 'potential', 'Ex', 'Ey', 'Ez']


class Command(TrapCommand):
    help = 'Sample potential and field of a voltage assignment over a grid (CSV x,y,z,potential,Ex,Ey,Ez)'

    def add_command_arguments(self, parser):
        parser.add_argument(
            'action',
            choices=['sample'],
            help='sample: evaluate the superposed field over the grid',
        )
        parser.add_argument(
            '--xs',
            default='0',
            help="x axis in metres, 'value' or 'start,stop,count' (default: 0); "
                 "negative starts need the --xs=-1e-5,1e-5,3 form",
        )
        parser.add_argument(
            '--ys',
            default='50e-6,500e-6,46',
            help="y axis in metres (default: 50e-6,500e-6,46)",
        )
        parser.add_argument(
            '--zs',
            default='0',
            help="z axis in metres (default: 0)",
        )
        parser.add_argument(
            '--volts',
            type=str,
            help='Voltage-set JSON file; default is the RF electrodes at the RF amplitude',
        )

    def run(self, **options):
        layout = self.config.load_layout()
        volts = self.load_volts(options['volts'])
        if not volts:
            volts = {name: self.config.drive.amplitude for name in layout.rf_names}

        rows = sample_grid(layout, volts, grid_axis(options['xs']), grid_axis(options['ys']),
                           grid_axis(options['zs']))
        self.emit_csv('field_sample', HEADER, rows)
        self.emit_json('field_sample', {
            'volts': dict(volts),
            'columns': HEADER,
            'rows': [list(row) for row in rows],
        })
        self.stdout.write(self.style.SUCCESS(f'Sampled {len(rows)} points'))
