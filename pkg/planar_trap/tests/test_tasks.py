from django.test import SimpleTestCase

from planar_trap import constants
from planar_trap.exceptions import TrapDesignError
from planar_trap.geometry import build_paper_layout
from planar_trap.tasks import dispatch_shuttle, run_fit_trial, run_montecarlo
from planar_trap.trap_analysis import RFDrive, calcium_40
from planar_trap.voltage_solver import SolveSpec, shuttle_spec, shuttle_waveform

DRIVE = RFDrive.from_hz(constants.RF_AMPLITUDE, constants.RF_FREQUENCY)


class MonteCarloTaskTests(SimpleTestCase):
    def test_heating_coverage(self):
        summary = run_montecarlo('heating', 100, seed=0)
        self.assertEqual(summary.runs, 100)
        self.assertEqual(summary.failures, 0)
        self.assertGreaterEqual(summary.fraction, 0.95)

    def test_nbar_coverage(self):
        summary = run_montecarlo('nbar', 100, seed=0)
        self.assertEqual(summary.failures, 0)
        self.assertGreaterEqual(summary.fraction, 0.95)

    def test_seeded_runs_repeat(self):
        first = run_montecarlo('heating', 5, seed=11)
        second = run_montecarlo('heating', 5, seed=11)
        self.assertEqual(first.outcomes, second.outcomes)
        self.assertEqual([o.index for o in first.outcomes], [0, 1, 2, 3, 4])

    def test_unknown_kind(self):
        with self.assertRaises(TrapDesignError):
            run_montecarlo('bogus', 3, seed=0)
        result = run_fit_trial.delay('bogus', 0, 0).get()
        self.assertEqual(result['status'], 'error')


class ShuttleTaskTests(SimpleTestCase):
    def test_dispatch_matches_in_process_solves(self):
        layout = build_paper_layout()
        ion = calcium_40()
        spec = shuttle_spec(SolveSpec(), layout)
        to_z = constants.SEGMENT_PITCH / 4
        dispatched = dispatch_shuttle(layout, DRIVE, ion, 0.0, to_z, 2, spec)
        direct = shuttle_waveform(layout, DRIVE, ion, 0.0, to_z, 2, spec)
        self.assertEqual(dispatched.waypoints, direct.waypoints)
        self.assertEqual(dispatched.times, direct.times)
        for a, b in zip(dispatched.sets, direct.sets):
            self.assertEqual(a.as_dict(), b.as_dict())
