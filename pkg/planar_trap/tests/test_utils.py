import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from planar_trap.exceptions import ConfigError
from planar_trap.utils import dump_json, output_paths, read_csv, read_json, write_csv


class OutputPathTests(SimpleTestCase):
    def test_stems_become_safe_file_names(self):
        paths = output_paths(Path('out'), 'trap report', 'both')
        self.assertEqual(paths['json'], Path('out') / 'trap_report.json')
        self.assertEqual(paths['csv'], Path('out') / 'trap_report.csv')
        self.assertEqual(output_paths(Path('out'), '../up/stem', 'json')['json'].name, '..upstem.json')

    def test_format_selection(self):
        paths = output_paths(Path('out'), 'waveform', 'csv')
        self.assertIsNone(paths['json'])
        self.assertEqual(paths['csv'].name, 'waveform.csv')

    def test_unusable_stem(self):
        with self.assertRaises(ConfigError):
            output_paths(Path('out'), '..', 'both')
        with self.assertRaises(ConfigError):
            output_paths(Path('out'), '', 'both')


class FileHelperTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_json_is_deterministic_and_finite(self):
        text = dump_json({'b': float('inf'), 'a': (1.0, 2.0)})
        self.assertEqual(text, dump_json({'a': [1.0, 2.0], 'b': float('inf')}))
        self.assertEqual(json.loads(text), {'a': [1.0, 2.0], 'b': 'inf'})

    def test_csv_round_trip(self):
        path = write_csv(self.out / 'rows.csv', ['x', 'y'], [(0.1, 2), (1e-7, '')])
        rows = read_csv(path)
        self.assertEqual(rows, [{'x': '0.1', 'y': '2'}, {'x': '1e-07'}])

    def test_missing_and_malformed_json(self):
        with self.assertRaises(ConfigError):
            read_json(self.out / 'missing.json')
        broken = self.out / 'broken.json'
        broken.write_text('{"a": ')
        with self.assertRaises(ConfigError) as ctx:
            read_json(broken, 'layout file')
        self.assertIn('broken.json', str(ctx.exception))
