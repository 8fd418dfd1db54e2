import math

import numpy as np
from django.test import SimpleTestCase

from planar_trap import constants
from planar_trap.exceptions import FitError, TrapDesignError, TruncationError
from planar_trap.thermometry import (
    COVERAGE_SIGMA,
    MotionalState,
    Sideband,
    SidebandSignal,
    fit_heating_rate,
    fit_nbar,
    heating_table,
    heating_to_noise,
    heating_trial,
    lamb_dicke,
    nbar_trial,
    noise_to_heating,
    noisy_signal,
    probe_durations,
    rabi_flop,
    sideband_ratio_to_nbar,
    summarize_trials,
    synthetic_heating_series,
    thermal_populations,
    trial_rng,
    truncation_size,
)
from planar_trap.trap_analysis import calcium_40

AXIAL = constants.angular(constants.AXIAL_FREQUENCY)
CARRIER = 2 * math.pi * 100e3


class PopulationTests(SimpleTestCase):
    def test_thermal_distribution(self):
        p = thermal_populations(2.0)
        n = np.arange(len(p))
        self.assertAlmostEqual(p.sum(), 1.0, delta=1e-10)
        self.assertAlmostEqual((n * p).sum(), 2.0, delta=1e-8)
        self.assertAlmostEqual(p[1] / p[0], 2.0 / 3.0)

    def test_ground_state(self):
        p = thermal_populations(0.0)
        self.assertEqual(p[0], 1.0)
        self.assertEqual(p[1:].sum(), 0.0)

    def test_truncation(self):
        self.assertEqual(truncation_size(0.0), 50)
        self.assertGreaterEqual(truncation_size(10.0), 220)
        with self.assertRaises(TruncationError):
            truncation_size(1e4)


class LambDickeTests(SimpleTestCase):
    def test_calcium_at_the_axial_frequency(self):
        self.assertAlmostEqual(lamb_dicke(calcium_40(), AXIAL), 0.06629, delta=1e-4)

    def test_scales_with_inverse_root_frequency(self):
        ion = calcium_40()
        self.assertAlmostEqual(lamb_dicke(ion, AXIAL) / lamb_dicke(ion, 4 * AXIAL), 2.0)


class RabiFlopTests(SimpleTestCase):
    eta = 0.066

    def test_matches_a_long_explicit_sum(self):
        nbar = 2.0
        durations = probe_durations(CARRIER * self.eta, 40)
        signal = rabi_flop(MotionalState(nbar, AXIAL), 'blue', CARRIER, self.eta, durations)
        n = np.arange(401)
        p = (nbar / (nbar + 1)) ** n / (nbar + 1)
        for t, value in zip(durations, signal.probabilities):
            expected = np.sum(p * np.sin(CARRIER * self.eta * np.sqrt(n + 1) * t / 2) ** 2)
            self.assertAlmostEqual(value, expected, delta=1e-10)

    def test_short_time_ratio_recovers_nbar(self):
        nbar = 0.8
        t = [1e-9]
        red = rabi_flop(MotionalState(nbar, AXIAL), Sideband.RED, CARRIER, self.eta, t).probabilities[0]
        blue = rabi_flop(MotionalState(nbar, AXIAL), Sideband.BLUE, CARRIER, self.eta, t).probabilities[0]
        self.assertAlmostEqual(sideband_ratio_to_nbar(red / blue), nbar, delta=1e-6)

    def test_red_sideband_is_dark_in_the_ground_state(self):
        durations = probe_durations(CARRIER * self.eta, 10)
        signal = rabi_flop(MotionalState(0.0, AXIAL), 'red', CARRIER, self.eta, durations)
        self.assertEqual(max(signal.probabilities), 0.0)

    def test_decay_damps_the_contrast(self):
        durations = np.linspace(0, 1e-3, 50)
        signal = rabi_flop(MotionalState(0.0, AXIAL), 'carrier', CARRIER, self.eta, durations, decay=1e4)
        self.assertAlmostEqual(signal.probabilities[-1], 0.5, delta=1e-3)

    def test_lamb_dicke_flag(self):
        signal = rabi_flop(MotionalState(50.0, AXIAL), 'blue', CARRIER, 0.1, [0.0, 1e-6])
        self.assertFalse(signal.lamb_dicke_ok)

    def test_ratio_outside_a_thermal_state(self):
        with self.assertRaises(FitError):
            sideband_ratio_to_nbar(1.0)


class FitNbarTests(SimpleTestCase):
    eta = lamb_dicke(calcium_40(), AXIAL)

    def signal(self, nbar, kind='blue', points=25):
        durations = probe_durations(CARRIER * self.eta, points)
        return rabi_flop(MotionalState(nbar, AXIAL), kind, CARRIER, self.eta, durations)

    def test_noiseless_fit(self):
        fit = fit_nbar(self.signal(0.5))
        self.assertAlmostEqual(fit.nbar, 0.5, delta=1e-5)
        self.assertLess(max(abs(r) for r in fit.residuals), 1e-6)

    def test_red_sideband_fit(self):
        self.assertAlmostEqual(fit_nbar(self.signal(2.0, 'red')).nbar, 2.0, delta=1e-4)

    def test_fit_with_free_rabi_frequency(self):
        fit = fit_nbar(self.signal(1.0), fit_rabi=True)
        self.assertAlmostEqual(fit.nbar, 1.0, delta=1e-4)
        self.assertAlmostEqual(fit.rabi / (CARRIER * self.eta), 1.0, delta=1e-5)

    def test_noisy_fit_covers_the_truth(self):
        noisy = noisy_signal(self.signal(1.0), trial_rng(3, 0), sigma=0.02)
        fit = fit_nbar(noisy)
        self.assertLess(abs(fit.nbar - 1.0), 5 * fit.error)

    def test_rejects_unusable_signals(self):
        with self.assertRaises(FitError):
            fit_nbar(self.signal(1.0, 'carrier'))
        with self.assertRaises(FitError):
            fit_nbar(self.signal(1.0, points=4))
        flat = SidebandSignal((0.0, 1e-5, 2e-5, 3e-5, 4e-5), (0.2,) * 5, Sideband.BLUE, CARRIER, self.eta)
        with self.assertRaises(FitError):
            fit_nbar(flat)
        short = rabi_flop(MotionalState(1.0, AXIAL), 'blue', CARRIER, self.eta, np.linspace(0, 1e-6, 10))
        with self.assertRaises(FitError):
            fit_nbar(short)


class HeatingTests(SimpleTestCase):
    def test_noiseless_rate(self):
        series = synthetic_heating_series(0.37, 0.05, np.linspace(0, 1.5, 6), 0.05)
        result = fit_heating_rate(series, AXIAL, calcium_40())
        self.assertAlmostEqual(result.rate, 0.37, places=12)
        self.assertAlmostEqual(result.intercept, 0.05, places=12)
        self.assertGreater(result.rate_error, 0)
        self.assertAlmostEqual(result.noise_density, heating_to_noise(0.37, AXIAL, calcium_40()))

    def test_negative_slope_has_no_noise_density(self):
        series = synthetic_heating_series(-0.2, 1.0, np.linspace(0, 1.5, 6), 0.05)
        with self.assertLogs('planar_trap.thermometry', level='WARNING') as logs:
            result = fit_heating_rate(series, AXIAL, calcium_40())
        self.assertAlmostEqual(result.rate, -0.2, places=12)
        self.assertIsNone(result.noise_density)
        expected = heating_to_noise(result.rate_error, AXIAL, calcium_40())
        self.assertAlmostEqual(result.noise_density_error / expected, 1.0, places=12)
        self.assertTrue(any('Negative heating rate' in line for line in logs.output))

    def test_rate_without_an_ion_has_no_noise_density(self):
        result = fit_heating_rate([(0.0, 0.1, 0.1), (1.0, 0.5, 0.1), (2.0, 0.9, 0.1)])
        self.assertIsNone(result.noise_density)

    def test_degenerate_series(self):
        with self.assertRaises(FitError):
            fit_heating_rate([(0.0, 0.1, 0.1), (1.0, 0.5, 0.1)])
        with self.assertRaises(FitError):
            fit_heating_rate([(1.0, 0.1, 0.1), (1.0, 0.5, 0.1), (1.0, 0.9, 0.1)])

    def test_noise_density_of_trap_one(self):
        density = heating_to_noise(0.6, AXIAL, calcium_40())
        self.assertAlmostEqual(density / 4.395e-15, 1.0, delta=0.01)
        self.assertAlmostEqual(noise_to_heating(density, AXIAL, calcium_40()), 0.6)

    def test_heating_table(self):
        table = heating_table()
        self.assertEqual([row.trap for row in table], [1, 2, 3, 4, 5, 6])
        self.assertAlmostEqual(table[0].noise_density / constants.NOISE_DENSITY_TRAP1, 1.0, delta=0.01)
        self.assertEqual(max(table, key=lambda row: row.rate).trap, 6)


class RandomStreamTests(SimpleTestCase):
    def test_trial_streams_are_reproducible_and_independent(self):
        a = trial_rng(0, 1).normal(size=4)
        np.testing.assert_array_equal(a, trial_rng(0, 1).normal(size=4))
        self.assertFalse(np.array_equal(a, trial_rng(0, 2).normal(size=4)))


class CoverageTests(SimpleTestCase):
    runs = 100

    def assertCovers(self, kind, trial):
        outcomes, failures = [], 0
        for index in range(self.runs):
            try:
                outcomes.append(trial(7, index))
            except TrapDesignError:
                failures += 1
        summary = summarize_trials(kind, outcomes, failures)
        self.assertEqual(summary.runs, self.runs)
        self.assertEqual(summary.coverage_sigma, COVERAGE_SIGMA)
        self.assertGreaterEqual(summary.fraction, 0.95)

    def test_nbar_fits_cover_the_truth(self):
        self.assertCovers('nbar', nbar_trial)

    def test_heating_fits_cover_the_truth(self):
        self.assertCovers('heating', heating_trial)

    def test_heating_errors_match_the_scatter(self):
        estimates = [heating_trial(11, index).estimate for index in range(self.runs)]
        errors = {heating_trial(11, index).error for index in range(3)}
        self.assertEqual(len(errors), 1)
        self.assertAlmostEqual(np.std(estimates, ddof=1) / errors.pop(), 1.0, delta=0.25)
