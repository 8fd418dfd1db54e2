import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import solve_ivp

from planar_trap import constants
from planar_trap.exceptions import FieldEvaluationError
from planar_trap.field_core import FieldPoint, superpose
from planar_trap.geometry import build_paper_layout, build_symmetric_layout
from planar_trap.trap_analysis import (
    RFDrive,
    TrapPotential,
    TrapReport,
    analyze_trap,
    calcium_40,
    check_report,
    find_minimum,
    micromotion_amplitude,
    potential_line_scan,
    q_matrix,
    rf_nil,
    secular_analysis,
    trap_depth,
)
from planar_trap.voltage_solver import SolveSpec, VoltageSet, solve_confinement

DRIVE = RFDrive.from_hz(constants.RF_AMPLITUDE, constants.RF_FREQUENCY)


@lru_cache(maxsize=None)
def solved_set(layout_name):
    layout = build_paper_layout() if layout_name == 'paper' else build_symmetric_layout()
    return solve_confinement(layout, DRIVE, calcium_40(), SolveSpec())


class RFOnlyTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.layout = build_paper_layout()
        cls.ion = calcium_40()
        cls.nil = rf_nil(cls.layout, DRIVE, cls.ion)
        cls.depth = trap_depth(cls.layout, DRIVE, {}, cls.ion, cls.nil)

    def test_ion_height(self):
        self.assertAlmostEqual(self.nil.y / 230e-6, 1.0, delta=0.1)

    def test_nil_leans_towards_the_narrow_rail(self):
        self.assertNotAlmostEqual(self.nil.x, 0.0, delta=1e-6)
        self.assertAlmostEqual(self.nil.z, 0.0)

    def test_rf_field_vanishes_at_the_nil(self):
        rf = {name: DRIVE.amplitude for name in self.layout.rf_names}
        _, field, _ = superpose(self.layout, rf, self.nil)
        _, nearby, _ = superpose(self.layout, rf, FieldPoint(self.nil.x, 1.1 * self.nil.y, 0.0))
        self.assertLess(np.linalg.norm(field), 1e-4 * np.linalg.norm(nearby))

    def test_field_flips_across_the_nil(self):
        rf = {name: DRIVE.amplitude for name in self.layout.rf_names}
        _, below, _ = superpose(self.layout, rf, FieldPoint(self.nil.x, 0.9 * self.nil.y, 0.0))
        _, above, _ = superpose(self.layout, rf, FieldPoint(self.nil.x, 1.1 * self.nil.y, 0.0))
        self.assertLess(below[0] * above[0], 0)
        self.assertLess(below[1] * above[1], 0)

    def test_trap_depth(self):
        self.assertFalse(self.depth.bounded)
        self.assertAlmostEqual(self.depth.depth / constants.TRAP_DEPTH, 1.0, delta=0.2)
        self.assertGreater(self.depth.escape_point[1], self.nil.y)

    def test_depth_matches_the_lowest_point_on_a_circle(self):
        potential = TrapPotential(self.layout, DRIVE, self.ion)
        nil = self.nil.as_array()
        radius = np.linalg.norm(np.array(self.depth.escape_point) - nil)
        floor = potential.energy(nil)
        lowest = math.inf
        for angle in np.linspace(0, 2 * math.pi, 3600, endpoint=False):
            r = nil + radius * np.array([math.cos(angle), math.sin(angle), 0.0])
            if r[1] > 0:
                lowest = min(lowest, potential.energy(r) - floor)
        self.assertAlmostEqual(lowest / self.depth.depth, 1.0, delta=0.02)

    def test_depth_scales_with_amplitude_squared(self):
        half = DRIVE.scaled(0.5)
        nil = rf_nil(self.layout, half, self.ion)
        self.assertAlmostEqual(nil.y, self.nil.y, delta=1e-7)
        depth = trap_depth(self.layout, half, {}, self.ion, nil)
        self.assertAlmostEqual(depth.depth / self.depth.depth, 0.25, delta=0.25 * 0.02)

    def test_q_matrix_is_linear_in_amplitude(self):
        single = q_matrix(TrapPotential(self.layout, DRIVE, self.ion), self.nil)
        double = q_matrix(TrapPotential(self.layout, DRIVE.scaled(2.0), self.ion), self.nil)
        np.testing.assert_allclose(double, 2 * single, rtol=1e-12)

    def test_translation_invariance(self):
        dx, dz = 40e-6, 25e-6
        moved = rf_nil(self.layout.translated(dx, dz), DRIVE, self.ion, z=dz, seed_x=dx)
        self.assertAlmostEqual(moved.x, self.nil.x + dx, delta=2e-8)
        self.assertAlmostEqual(moved.y, self.nil.y, delta=2e-8)

    def test_mirror_image_layout(self):
        mirrored = rf_nil(self.layout.mirrored_z(), DRIVE, self.ion)
        self.assertAlmostEqual(mirrored.x, self.nil.x, delta=2e-8)
        self.assertAlmostEqual(mirrored.y, self.nil.y, delta=2e-8)

    def test_line_scan(self):
        rows = potential_line_scan(self.layout, DRIVE, {}, self.ion, self.nil, axis=0, points=61)
        self.assertEqual(len(rows), 61)
        offset = min(rows, key=lambda row: row[1])[0]
        self.assertAlmostEqual(offset, 0.0, delta=10e-6)

    def test_invalid_drive(self):
        with self.assertRaises(FieldEvaluationError):
            RFDrive(0.0, 1e8)


class ConfinedTrapTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.layout = build_paper_layout()
        cls.ion = calcium_40()
        cls.volts = solved_set('paper')
        cls.report = analyze_trap(cls.layout, DRIVE, cls.volts, cls.ion)
        cls.r0 = cls.report.position

    def test_axial_frequency(self):
        axial = self.report.axial_frequency / (2 * math.pi)
        self.assertAlmostEqual(axial / constants.AXIAL_FREQUENCY, 1.0, delta=1e-3)
        self.assertFalse(self.report.imaginary)
        self.assertTrue(self.report.stable)

    def test_frequencies_match_parabola_fits(self):
        potential = TrapPotential(self.layout, DRIVE, self.ion, self.volts)
        offsets = np.linspace(-3e-6, 3e-6, 7)
        r0 = np.array(self.r0)
        for frequency, axis in zip(self.report.frequencies, self.report.principal_axes):
            energies = [potential.energy(r0 + s * np.array(axis)) for s in offsets]
            a = np.polyfit(offsets, energies, 2)[0]
            fitted = math.sqrt(2 * a * constants.ELEMENTARY_CHARGE / self.ion.mass)
            self.assertAlmostEqual(fitted / frequency, 1.0, delta=1e-3)

    def test_radial_tilt(self):
        self.assertAlmostEqual(abs(self.report.tilt_deg), constants.RADIAL_TILT_DEG, delta=5.0)

    def test_report_is_consistent(self):
        self.assertEqual(check_report(self.report), [])
        self.assertGreater(self.report.depth, 0)
        self.assertGreater(self.report.rf_depth, 0)

    def test_analysis_is_repeatable(self):
        first = secular_analysis(self.layout, DRIVE, self.volts, self.ion, self.r0)
        second = secular_analysis(self.layout, DRIVE, self.volts, self.ion, self.r0)
        self.assertEqual(first, second)

    def test_dc_curvature_is_traceless(self):
        hessian = TrapPotential(self.layout, DRIVE, self.ion, self.volts).dc_hessian(np.array(self.r0))
        self.assertLess(abs(np.trace(hessian)), 1e-9 * np.abs(hessian).max())

    def test_inverted_set_is_flagged(self):
        report = secular_analysis(self.layout, DRIVE, self.volts.scaled(-1), self.ion, self.r0)
        self.assertTrue(report.imaginary)
        self.assertLess(min(report.frequencies), 0)

    def test_minimum_is_stationary(self):
        r0 = find_minimum(self.layout, DRIVE, self.volts, self.ion, self.r0)
        np.testing.assert_allclose(r0.as_array(), self.r0, atol=1e-8)

    def test_minimum_does_not_depend_on_the_seed(self):
        low = find_minimum(self.layout, DRIVE, self.volts, self.ion, FieldPoint(0.0, 150e-6, 0.0))
        high = find_minimum(self.layout, DRIVE, self.volts, self.ion, FieldPoint(0.0, 350e-6, 0.0))
        np.testing.assert_allclose(low.as_array(), high.as_array(), atol=1e-8)

    def test_micromotion_matches_the_driven_motion_in_this_trap(self):
        q = np.array(self.report.q_matrix)
        self.assertLess(np.abs(np.linalg.eigvalsh(q)).max(), 0.4)
        d = np.array([1.0, 0.5, 0.0])
        hold = q @ q @ d / 8

        def rhs(tau, state):
            r, v = state[:3], state[3:]
            return np.concatenate([v, -0.5 * math.cos(tau) * (q @ r) + hold])

        cycles = 50
        tau = np.linspace(0, 2 * math.pi * cycles, cycles * 400 + 1)
        solution = solve_ivp(rhs, (0, tau[-1]), np.concatenate([d + 0.5 * q @ d, np.zeros(3)]),
                             method='DOP853', rtol=1e-10, atol=1e-12, t_eval=tau)
        amplitude = np.trapezoid(solution.y[:3] * np.cos(tau), tau, axis=1) / (math.pi * cycles)

        expected = micromotion_amplitude(self.report, 1e-6 * d) / 1e-6
        self.assertLess(np.linalg.norm(amplitude - expected), 0.05 * np.linalg.norm(expected))


class SymmetricLayoutTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.layout = build_symmetric_layout()
        cls.ion = calcium_40()
        cls.volts = solved_set('symmetric')
        r0 = find_minimum(cls.layout, DRIVE, cls.volts, cls.ion, FieldPoint(0.0, 150e-6, 0.0))
        cls.report = secular_analysis(cls.layout, DRIVE, cls.volts, cls.ion, r0)

    def test_minimum_on_the_symmetry_plane(self):
        self.assertAlmostEqual(self.report.position[0], 0.0, delta=1e-8)

    def test_axes_are_not_tilted(self):
        tilt = abs(self.report.tilt_deg)
        self.assertLess(min(tilt, abs(tilt - 90.0)), 1e-3)


class MicromotionTests(SimpleTestCase):
    def report(self, q):
        return TrapReport(
            position=(0.0, 1e-4, 0.0), ion_height=1e-4, frequencies=(3.0, 2.0, 1.0),
            principal_axes=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)), tilt_deg=0.0,
            q_matrix=((q, 0.0, 0.0), (0.0, -q, 0.0), (0.0, 0.0, 0.0)), q_max=q, stable=True,
            imaginary=False, axial_index=2, rf_field_residual=0.0,
        )

    def test_matches_the_driven_equation_of_motion(self):
        q, d = 0.2, 1.0

        def rhs(tau, state):
            u, v = state
            return [v, -0.5 * q * u * math.cos(tau) + q * q * d / 8]

        cycles = 50
        tau = np.linspace(0, 2 * math.pi * cycles, cycles * 400 + 1)
        solution = solve_ivp(rhs, (0, tau[-1]), [d + q * d / 2, 0.0], method='DOP853',
                             rtol=1e-10, atol=1e-12, t_eval=tau)
        u = solution.y[0]
        amplitude = np.trapezoid(u * np.cos(tau), tau) / (math.pi * cycles)

        expected = micromotion_amplitude(self.report(q), (1e-6 * d, 0.0, 0.0))[0] / 1e-6
        self.assertAlmostEqual(amplitude / expected, 1.0, delta=0.05)

    def test_no_micromotion_at_the_nil(self):
        self.assertFalse(micromotion_amplitude(self.report(0.3), (0.0, 0.0, 0.0)).any())

    def test_check_report_flags_bad_axes(self):
        report = replace(self.report(0.1), principal_axes=((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)))
        self.assertIn('principal axes are not orthonormal', check_report(report))
