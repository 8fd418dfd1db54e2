from ...config import load_layout_file
from ...geometry import build_paper_layout, build_symmetric_layout, validate_layout
from ...serializers import LayoutSerializer, LayoutViolationSerializer
from ..base import TrapCommand

BUILDERS = {
    'emit-paper': ('paper_layout', build_paper_layout),
    'emit-symmetric': ('symmetric_layout', build_symmetric_layout),
}


class Command(TrapCommand):
    help = 'Write the builtin electrode layouts as JSON, or validate a layout file'

    def add_command_arguments(self, parser):
        parser.add_argument(
            'action',
            choices=['emit-paper', 'emit-symmetric', 'validate'],
            help='emit-paper / emit-symmetric write a builtin layout; validate checks a layout file',
        )
        parser.add_argument(
            'path',
            nargs='?',
            help='Layout file to validate (default: the configured layout)',
        )

    def run(self, **options):
        if options['action'] == 'validate':
            self.validate(options['path'])
            return

        stem, builder = BUILDERS[options['action']]
        layout = builder()
        payload = LayoutSerializer(layout).data
        path = self.paths(stem)['json']
        if path is None:
            self.print_json(payload)
        else:
            self.emit_json(stem, payload)
        self.stdout.write(self.style.SUCCESS(f'{len(layout.electrodes)} electrodes, gap policy {layout.gap_policy}'))

    def validate(self, path):
        if path:
            layout = load_layout_file(path)
            source = path
        else:
            layout = self.config.load_layout()
            source = self.config.layout_source

        violations = validate_layout(layout)
        if not violations:
            self.stdout.write(self.style.SUCCESS(f'{source}: {len(layout.electrodes)} electrodes, no violations'))
            return

        for violation in violations:
            self.stdout.write(self.style.ERROR(f'[{violation.rule}] {violation.message}'))
        self.emit_json('layout_violations', {
            'source': str(source),
            'violations': LayoutViolationSerializer(violations, many=True).data,
        })
        self.fail(f'{source}: {len(violations)} layout violations')
