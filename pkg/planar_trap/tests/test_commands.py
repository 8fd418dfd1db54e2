import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from planar_trap.exceptions import ConfigError
from planar_trap.management.base import float_triple, grid_axis
from planar_trap.pipeline import PaperReproduction


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, *args):
        stdout = StringIO()
        call_command(name, *args, '--out', str(self.out), stdout=stdout)
        return stdout.getvalue()

    def assertExits(self, returncode, name, *args):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, *args)
        self.assertEqual(ctx.exception.returncode, returncode)
        return ctx.exception

    def load(self, name):
        return json.loads((self.out / name).read_text())

    def rows(self, name):
        with (self.out / name).open() as handle:
            return list(csv.DictReader(handle))


class ArgumentHelperTests(SimpleTestCase):
    def test_float_triple(self):
        self.assertEqual(float_triple('1,2.5,-3e-6'), (1.0, 2.5, -3e-6))
        with self.assertRaises(ConfigError):
            float_triple('1,2')
        with self.assertRaises(ConfigError):
            float_triple('a,b,c')

    def test_grid_axis(self):
        self.assertEqual(grid_axis('0.5'), [0.5])
        self.assertEqual(grid_axis('0,1,3'), [0.0, 0.5, 1.0])
        with self.assertRaises(ConfigError):
            grid_axis('0,1,0')


class LayoutCommandTests(CommandTestCase):
    def test_emit_and_validate(self):
        output = self.call('layout', 'emit-paper')
        self.assertIn('17 electrodes', output)
        layout = self.load('paper_layout.json')
        self.assertEqual(len(layout['electrodes']), 17)
        output = self.call('layout', 'validate', str(self.out / 'paper_layout.json'))
        self.assertIn('no violations', output)

    def test_overlapping_layout_fails(self):
        path = self.out / 'overlap.json'
        path.write_text(json.dumps({'electrodes': [
            {'name': 'rf', 'role': 'RF', 'rects': [[0.0, 2e-4, 0.0, 1e-4]]},
            {'name': 'dc', 'role': 'DC', 'rects': [[1e-4, 3e-4, 0.0, 1e-4]]},
        ]}))
        self.assertExits(1, 'layout', 'validate', str(path))
        violations = self.load('layout_violations.json')['violations']
        self.assertEqual(violations[0]['rule'], 'overlap')

    def test_malformed_layout_is_a_config_error(self):
        path = self.out / 'broken.json'
        path.write_text('{"electrodes": [')
        self.assertExits(2, 'layout', 'validate', str(path))

    def test_missing_config_file(self):
        error = self.assertExits(2, 'layout', 'emit-paper', '--config', str(self.out / 'none.json'))
        self.assertIn('none.json', str(error))


class FieldCommandTests(CommandTestCase):
    def test_sample(self):
        self.call('field', 'sample', '--xs=-1e-5,1e-5,3', '--ys', '2e-4,3e-4,2')
        rows = self.rows('field_sample.csv')
        self.assertEqual(len(rows), 6)
        xs = sorted({float(row['x']) for row in rows})
        self.assertEqual(len(xs), 3)
        for x, expected in zip(xs, (-1e-5, 0.0, 1e-5)):
            self.assertAlmostEqual(x, expected, delta=1e-12)
        self.assertEqual(list(rows[0]), ['x', 'y', 'z', 'potential', 'Ex', 'Ey', 'Ez'])
        self.assertEqual(len(self.load('field_sample.json')['rows']), 6)

    def test_json_only(self):
        self.call('field', 'sample', '--ys', '2e-4', '--format', 'json')
        self.assertTrue((self.out / 'field_sample.json').exists())
        self.assertFalse((self.out / 'field_sample.csv').exists())

    def test_surface_point_is_rejected(self):
        self.assertExits(1, 'field', 'sample', '--ys', '0')


class CircuitCommandTests(CommandTestCase):
    def test_paper_silicon(self):
        output = self.call('circuit')
        self.assertIn('does not match its parts', output)
        data = self.load('circuit.json')
        self.assertAlmostEqual(data['resonance_hz'] / 20.6e6, 1.0, delta=0.005)
        self.assertLess(data['quality_at_295k'], 20)
        self.assertGreater(data['quality_at_10k'], 1200)
        self.assertFalse(data['divider']['consistent'])
        self.assertEqual(len(self.rows('filter_bode.csv')), 61)

    def test_external_filter(self):
        self.call('circuit', '--filter', 'external', '--quality', '1205')
        data = self.load('circuit.json')
        self.assertAlmostEqual(data['filter']['stage_cutoff_hz'] / 80.0, 1.0, delta=0.05)
        self.assertAlmostEqual(data['power_dissipation_w'] * 1e3, 10.0, delta=0.2)

    def test_custom_spec(self):
        path = self.out / 'spec.json'
        path.write_text(json.dumps({
            'inductance_h': 6.3e-6, 'capacitance_f': 9.5e-12, 'participation': 0.9,
            'loss_tangent_295k': 1e-4, 'inductor_q_295k': 400, 'inductor_q_10k': 1300,
            'temperatures_k': [10, 100, 295],
        }))
        self.call('circuit', '--spec', str(path))
        self.assertEqual(len(self.rows('q_vs_temperature.csv')), 3)

    def test_spec_with_unknown_key(self):
        path = self.out / 'spec.json'
        path.write_text(json.dumps({'inductance': 1e-6}))
        self.assertExits(2, 'circuit', '--spec', str(path))


class ThermoCommandTests(CommandTestCase):
    def test_simulate_then_fit(self):
        self.call('thermo', 'simulate', '--nbar', '0.7')
        self.assertEqual(len(self.rows('signal.csv')), 25)
        self.call('thermo', 'fit', '--signal', str(self.out / 'signal.csv'),
                  '--meta', str(self.out / 'signal.json'))
        self.assertAlmostEqual(self.load('nbar_fit.json')['nbar'], 0.7, delta=1e-4)

    def test_fit_json_signal(self):
        self.call('thermo', 'simulate', '--nbar', '0.4', '--kind', 'red', '--periods', '3')
        self.call('thermo', 'fit', '--signal', str(self.out / 'signal.json'))
        fit = self.load('nbar_fit.json')
        self.assertEqual(fit['kind'], 'red')
        self.assertAlmostEqual(fit['nbar'], 0.4, delta=1e-4)

    def test_noisy_simulation_is_seeded(self):
        self.call('thermo', 'simulate', '--shots', '100', '--seed', '5')
        first = (self.out / 'signal.csv').read_text()
        self.call('thermo', 'simulate', '--shots', '100', '--seed', '5')
        self.assertEqual((self.out / 'signal.csv').read_text(), first)

    def test_heating_fit(self):
        path = self.out / 'heating.csv'
        lines = ['wait_s,nbar,sigma'] + [f'{t},{0.05 + 0.37 * t!r},0.05' for t in (0.0, 0.5, 1.0, 1.5)]
        path.write_text('\n'.join(lines) + '\n')
        self.call('thermo', 'fit', '--heating', str(path))
        result = self.load('heating_fit.json')
        self.assertAlmostEqual(result['rate_phonons_per_s'], 0.37, places=9)
        self.assertGreater(result['noise_density_v2_m2_hz'], 0)

    def test_cooling_series_has_no_noise_density(self):
        path = self.out / 'heating.csv'
        lines = ['wait_s,nbar,sigma'] + [f'{t},{1.0 - 0.2 * t!r},0.05' for t in (0.0, 0.5, 1.0, 1.5)]
        path.write_text('\n'.join(lines) + '\n')
        output = self.call('thermo', 'fit', '--heating', str(path))
        self.assertIn('no noise density', output)
        result = self.load('heating_fit.json')
        self.assertAlmostEqual(result['rate_phonons_per_s'], -0.2, places=9)
        self.assertIsNone(result['noise_density_v2_m2_hz'])
        self.assertGreater(result['noise_density_error'], 0)

    def test_noise_conversion(self):
        self.call('thermo', 'noise', '--rate', '0.6')
        density = self.load('noise.json')['noise_density_v2_m2_hz']
        self.assertAlmostEqual(density / 4.4e-15, 1.0, delta=0.03)

    def test_noise_table(self):
        self.call('thermo', 'noise')
        rows = self.rows('noise_table.csv')
        self.assertEqual(len(rows), 6)
        self.assertEqual(len(self.load('noise_table.json')['rows']), 6)

    def test_montecarlo(self):
        self.call('thermo', 'montecarlo', '--kind', 'heating', '--runs', '20')
        data = self.load('montecarlo.json')
        self.assertEqual(data['heating']['runs'], 20)
        self.assertEqual(len(self.rows('montecarlo.csv')), 20)

    def test_fit_needs_one_input(self):
        self.assertExits(2, 'thermo', 'fit')

    def test_bad_kind(self):
        self.assertExits(2, 'thermo', 'simulate', '--kind', 'green')
        self.assertExits(2, 'thermo', 'montecarlo', '--kind', 'blue')

    def test_carrier_fit_fails(self):
        self.call('thermo', 'simulate', '--kind', 'carrier')
        self.assertExits(1, 'thermo', 'fit', '--signal', str(self.out / 'signal.json'))


class SolveAndAnalyzeCommandTests(CommandTestCase):
    def test_solve_then_analyze(self):
        output = self.call('solve')
        self.assertIn('Solved', output)
        check = self.load('solve_check.json')['check']
        self.assertAlmostEqual(check['axial_frequency_hz'] / 1.069e6, 1.0, delta=1e-3)
        self.assertLessEqual(check['max_abs_v'], 40.0)

        self.call('analyze', '--volts', str(self.out / 'voltages.json'))
        report = self.load('trap_report.json')
        self.assertAlmostEqual(report['axial_frequency_hz'] / 1.069e6, 1.0, delta=1e-3)
        self.assertEqual(report['problems'], [])
        self.assertAlmostEqual(abs(report['tilt_deg']), 20.0, delta=5.0)
        self.assertTrue(self.rows('potential_scan.csv'))

    def test_infeasible_bound(self):
        self.assertExits(1, 'solve', '--bound-v', '0.5')

    def test_unknown_electrode_in_voltage_file(self):
        path = self.out / 'volts.json'
        path.write_text(json.dumps({'volts': {'dc_L9': 1.0}}))
        self.assertExits(1, 'analyze', '--volts', str(path))

    def test_non_finite_voltage_file(self):
        path = self.out / 'volts.json'
        path.write_text('{"volts": {"centre": NaN}}')
        self.assertExits(2, 'analyze', '--volts', str(path))


class ShuttleCommandTests(CommandTestCase):
    def test_half_pitch_shuttle(self):
        self.call('shuttle', '--to-z', '180e-6', '--steps', '3')
        data = self.load('waveform.json')
        self.assertEqual(len(data['samples']), 3)
        for step in data['steps']:
            self.assertAlmostEqual(step['minimum_m'][2], step['waypoint_m'], delta=1e-6)
        self.assertEqual(len(self.rows('waveform.csv')), 3)

    def test_endpoint_outside_the_segments(self):
        self.assertExits(1, 'shuttle', '--to-z', '5e-3')


class ReproducePaperCommandTests(CommandTestCase):
    def test_full_reproduction(self):
        output = self.call('reproduce_paper')
        self.assertIn('checks passed', output)
        summary = self.load('summary.json')
        self.assertEqual(summary['status'], 'pass')
        self.assertIsNone(summary['failed_stage'])
        report = self.load('report.json')
        self.assertIn('shuttle', report)

    def test_unexpected_stage_error_is_recorded(self):
        with patch.object(PaperReproduction, 'stage_rf_trap', side_effect=RuntimeError('singular grid')):
            error = self.assertExits(1, 'reproduce_paper')
        self.assertIn('rf_trap', str(error))
        summary = self.load('summary.json')
        self.assertEqual(summary['status'], 'fail')
        self.assertEqual(summary['failed_stage'], 'rf_trap')
        self.assertEqual(summary['completed_stages'], ['layout'])
        self.assertIn('RuntimeError: singular grid', summary['error'])
        self.assertIn('layout', self.load('report.json'))

    def test_missing_layout_file(self):
        missing = str(self.out / 'missing_layout.json')
        error = self.assertExits(2, 'reproduce_paper', '--layout-file', missing)
        self.assertIn(missing, str(error))
