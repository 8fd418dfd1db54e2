import math
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ..config import get_defaults, parse_config
from ..exceptions import ConfigError, TrapDesignError
from ..serializers import VoltageSetSerializer
from ..utils import dump_json, output_paths, read_json, validated, write_csv, write_json


def float_triple(text):
    """'ex,ey,ez' -> (ex, ey, ez)"""
    try:
        values = tuple(float(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(f"Expected three comma-separated numbers, got '{text}'") from None
    if len(values) != 3 or not all(math.isfinite(v) for v in values):
        raise ConfigError(f"Expected three finite comma-separated numbers, got '{text}'")
    return values


def grid_axis(text):
    """'start,stop,count' -> list of floats"""
    parts = text.split(',')
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise ConfigError(f"Grid axes are 'value' or 'start,stop,count', got '{text}'") from None
    if count < 1:
        raise ConfigError(f"Grid axis needs at least one point, got '{text}'")
    if count == 1:
        return [start]
    step = (stop - start) / (count - 1)
    return [start + k * step for k in range(count)]


class TrapCommand(BaseCommand):
    """
    Base for the toolkit commands: shared run-configuration flags, error to
    exit-status mapping (config errors exit 2, every other failure exits 1)
    and output helpers.
    """

    def add_arguments(self, parser):
        defaults = get_defaults()
        parser.add_argument(
            '--config',
            type=str,
            help='JSON run configuration file; flags override its values',
        )
        parser.add_argument(
            '--out',
            dest='output_dir',
            type=str,
            help=f"Output directory (default: {defaults['output_dir']})",
        )
        parser.add_argument(
            '--format',
            dest='formats',
            choices=['json', 'csv', 'both'],
            help=f"Output formats (default: {defaults['formats']})",
        )
        parser.add_argument(
            '--seed',
            type=int,
            help=f"Random seed for synthetic data (default: {defaults['seed']})",
        )
        parser.add_argument(
            '--layout-file',
            type=str,
            help=f"Layout JSON file instead of the builtin layout (default: {defaults['layout']})",
        )
        parser.add_argument(
            '--amplitude-v',
            type=float,
            help=f"RF amplitude U0 in volts (default: {defaults['amplitude_v']})",
        )
        parser.add_argument(
            '--frequency-hz',
            type=float,
            help=f"RF drive frequency in Hz (default: {defaults['frequency_hz']})",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        overrides = {
            key: options.get(key)
            for key in ('output_dir', 'formats', 'seed', 'layout_file', 'amplitude_v', 'frequency_hz')
        }
        try:
            self.config = parse_config(options.get('config'), overrides)
            self.run(**options)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except TrapDesignError as exc:
            raise CommandError(str(exc), returncode=1) from exc

    def run(self, **options):
        raise NotImplementedError

    def fail(self, message):
        """Invariant violation in this command's outputs"""
        raise CommandError(message, returncode=1)

    def paths(self, stem):
        return output_paths(self.config.output_dir, stem, self.config.formats)

    def emit_json(self, stem, payload):
        path = self.paths(stem)['json']
        if path is not None:
            write_json(path, payload)
            self.stdout.write(f'Wrote {path}')
        return path

    def emit_csv(self, stem, header, rows):
        path = self.paths(stem)['csv']
        if path is not None:
            write_csv(path, header, rows)
            self.stdout.write(f'Wrote {path}')
        return path

    def load_volts(self, path):
        if not path:
            return {}
        data = read_json(Path(path), 'voltage file')
        return validated(VoltageSetSerializer, data, f"voltage file {path}").save()

    def print_json(self, payload):
        self.stdout.write(dump_json(payload), ending='')
