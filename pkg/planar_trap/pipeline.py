"""
End-to-end reproduction of the five-wire trap: geometry, RF-only trap,
DC solution, secular data, drive-chain circuits, heating-rate noise
table, thermometry round trips and a one-pitch shuttle, each checked
against its acceptance band.
"""
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from . import circuits, constants
from .config import RunConfig, config_summary
from .exceptions import StageError, TrapDesignError
from .field_core import FieldPoint
from .geometry import validate_layout
from .serializers import (LayoutViolationSerializer, NoiseRowSerializer, TrapReportSerializer,
                          VoltageSetSerializer, WaveformSerializer)
from .tasks import dispatch_shuttle, run_montecarlo
from .thermometry import (MotionalState, Sideband, fit_heating_rate, fit_nbar, heating_table,
                          heating_to_noise, lamb_dicke, probe_durations, rabi_flop,
                          synthetic_heating_series)
from .trap_analysis import (find_minimum, potential_line_scan, rf_nil, secular_analysis,
                            trap_depth)
from .utils import write_csv, write_json
from .voltage_solver import shuttle_spec, solve_confinement

logger = logging.getLogger(__name__)

SHUTTLE_STEPS = 5
SHUTTLE_POSITION_TOLERANCE = 1e-6       # m
SHUTTLE_FREQUENCY_DRIFT = 0.05
MONTECARLO_PASS_FRACTION = 0.95


class Check(NamedTuple):
    name: str
    value: float
    low: Optional[float]
    high: Optional[float]
    passed: bool

    def as_dict(self) -> Dict[str, object]:
        return {'name': self.name, 'value': self.value, 'low': self.low, 'high': self.high,
                'passed': self.passed}


def band(name: str, value: float, target: float, tolerance: float) -> Check:
    """Relative band target * (1 +/- tolerance)"""
    low, high = target * (1 - tolerance), target * (1 + tolerance)
    return Check(name, float(value), low, high, bool(low <= value <= high))


def bounded(name: str, value: float, low: Optional[float] = None, high: Optional[float] = None) -> Check:
    passed = (low is None or value >= low) and (high is None or value <= high)
    return Check(name, float(value), low, high, bool(passed))


class ReproductionResult(NamedTuple):
    status: int
    summary: Dict[str, object]
    bundle_dir: Path
    failed_stage: Optional[str]


class PaperReproduction:
    """Runs the reproduction stages in order and writes the report bundle"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.report: Dict[str, object] = {'config': config_summary(config)}
        self.checks: List[Check] = []
        self.completed: List[str] = []
        self.layout = None
        self.volts = None
        self.minimum = None

    def run(self) -> ReproductionResult:
        stages = [
            ('layout', self.stage_layout),
            ('rf_trap', self.stage_rf_trap),
            ('solve', self.stage_solve),
            ('secular', self.stage_secular),
            ('circuits', self.stage_circuits),
            ('noise_table', self.stage_noise_table),
            ('thermometry', self.stage_thermometry),
            ('shuttle', self.stage_shuttle),
        ]
        failed = None
        error = None
        for name, stage in stages:
            logger.info(f"Stage {name} starting")
            try:
                stage()
            except TrapDesignError as exc:
                failed, error = name, StageError(name, exc)
                logger.error(str(error))
                break
            except Exception as exc:
                failed, error = name, StageError(name, f"{type(exc).__name__}: {exc}")
                logger.exception(f"Stage {name} raised an unexpected error")
                break
            self.completed.append(name)
            logger.info(f"Stage {name} finished")

        passed = failed is None and all(check.passed for check in self.checks)
        summary = {
            'status': 'pass' if passed else 'fail',
            'completed_stages': list(self.completed),
            'failed_stage': failed,
            'error': str(error) if error else None,
            'checks': [check.as_dict() for check in self.checks],
        }
        self.write_bundle(summary)
        status = 0 if passed else 1
        return ReproductionResult(status, summary, self.out_dir, failed)

    def _csv(self, name: str, header, rows) -> None:
        if self.config.write_csv:
            write_csv(self.out_dir / f"{name}.csv", header, rows)

    def write_bundle(self, summary: Dict[str, object]) -> None:
        if self.config.write_json:
            write_json(self.out_dir / 'report.json', self.report)
        write_json(self.out_dir / 'summary.json', summary)

    def stage_layout(self) -> None:
        self.layout = self.config.load_layout()
        violations = validate_layout(self.layout)
        self.report['layout'] = {
            'source': self.config.layout_source,
            'electrodes': len(self.layout.electrodes),
            'violations': LayoutViolationSerializer(violations, many=True).data,
        }
        self.checks.append(bounded('layout_violations', len(violations), high=0))

    def stage_rf_trap(self) -> None:
        config = self.config
        nil = rf_nil(self.layout, config.drive, config.ion, seed_height=config.seed_height)
        depth = trap_depth(self.layout, config.drive, {}, config.ion, nil, box=config.depth_box)
        self.report['rf_trap'] = {
            'position_m': list(nil.as_array()),
            'ion_height_m': nil.y,
            'depth_ev': depth.depth,
            'escape_point_m': list(depth.escape_point),
            'depth_bounded': depth.bounded,
        }
        self.checks.append(band('ion_height_m', nil.y, constants.ION_HEIGHT, 0.10))
        self.checks.append(band('rf_depth_ev', depth.depth, constants.TRAP_DEPTH, 0.20))
        self._csv('rf_vertical_scan', ['offset_m', 'total_ev', 'pseudo_ev'],
                  potential_line_scan(self.layout, config.drive, {}, config.ion, nil, axis=1,
                                      half_width=0.9 * nil.y))

    def stage_solve(self) -> None:
        config = self.config
        self.volts = solve_confinement(self.layout, config.drive, config.ion, config.solve_spec)
        self.report['voltages'] = VoltageSetSerializer(self.volts).data
        self.checks.append(bounded('max_abs_dc_v', self.volts.max_abs(), high=config.solve_spec.bound))

    def stage_secular(self) -> None:
        config = self.config
        stray = config.solve_spec.stray_field
        seed = FieldPoint(0.0, config.seed_height, 0.0)
        self.minimum = find_minimum(self.layout, config.drive, self.volts, config.ion, seed, stray)
        report = secular_analysis(self.layout, config.drive, self.volts, config.ion, self.minimum, stray)
        depth = trap_depth(self.layout, config.drive, self.volts, config.ion, self.minimum, stray,
                           box=config.depth_box)
        rf = self.report['rf_trap']
        report = replace(
            report,
            depth=depth.depth,
            escape_point=depth.escape_point,
            depth_bounded=depth.bounded,
            rf_depth=rf['depth_ev'],
            rf_escape_point=tuple(rf['escape_point_m']),
        )
        self.report['trap'] = TrapReportSerializer(report).data

        target = config.solve_spec.axial_frequency
        self.checks.append(band('axial_frequency_hz', report.axial_frequency / (2 * math.pi),
                                target / (2 * math.pi), 1e-3))
        self.checks.append(bounded('radial_tilt_deg', abs(report.tilt_deg),
                                   constants.RADIAL_TILT_DEG - 5, constants.RADIAL_TILT_DEG + 5))
        self.checks.append(bounded('q_max', report.q_max, high=0.9))
        self._csv('axial_scan', ['offset_m', 'total_ev', 'pseudo_ev'],
                  potential_line_scan(self.layout, config.drive, self.volts, config.ion, self.minimum,
                                      axis=2, stray_field=stray))

    def stage_circuits(self) -> None:
        silicon = circuits.paper_silicon_resonator()
        silica = circuits.fused_silica_resonator()
        grid = circuits.default_temperature_grid()
        silicon_q = circuits.q_vs_temperature(silicon, grid)
        silica_q = circuits.q_vs_temperature(silica, grid)

        resonance = circuits.lc_resonance(constants.RESONATOR_INDUCTANCE, constants.RESONATOR_CAPACITANCE)
        onchip = circuits.FILTER_PRESETS['onchip']
        external = circuits.FILTER_PRESETS['external']
        power = circuits.power_dissipation(constants.RF_AMPLITUDE, constants.RESONATOR_CAPACITANCE,
                                           constants.angular(constants.RF_FREQUENCY),
                                           constants.RESONATOR_Q_LOW_T)
        divider = circuits.paper_divider_check()

        q_values = [q for _, q in silicon_q]
        monotone = all(b <= a * (1 + 1e-12) for a, b in zip(q_values, q_values[1:]))
        cold = min(q for t, q in silicon_q if t <= 20.0)
        warm = silicon.quality(295.0)

        self.report['circuits'] = {
            'resonance_hz': resonance,
            'power_dissipation_w': power,
            'silicon_q_295k': warm,
            'silicon_q_min_below_20k': cold,
            'fused_silica_q_295k': silica.quality(295.0),
            'onchip_filter_cutoff_hz': onchip.cutoff,
            'external_filter_cutoff_hz': external.cutoff,
            'external_filter_cascade_3db_hz': circuits.cascade_cutoff(external),
            'transfer_approximation': circuits.TRANSFER_APPROXIMATION,
            'divider': divider._asdict(),
            'matching_network': circuits.matching_network(),
        }
        self.checks.extend([
            band('resonance_hz', resonance, constants.RF_FREQUENCY, 0.005),
            band('onchip_filter_cutoff_hz', onchip.cutoff, 4.82e3, 0.01),
            band('power_dissipation_w', power, 10e-3, 0.02),
            band('external_filter_cutoff_hz', external.cutoff, constants.EXTERNAL_FILTER_CUTOFF, 0.05),
            bounded('silicon_q_295k', warm, high=20.0),
            bounded('silicon_q_min_below_20k', cold, low=1200.0),
            bounded('silicon_q_monotone', float(monotone), low=1.0),
            band('fused_silica_q_295k', silica.quality(295.0), 400.0, 0.25),
        ])
        self._csv('q_vs_temperature', ['temperature_k', 'q_paper_silicon', 'q_fused_silica'],
                  [(t, qa, qb) for (t, qa), (_, qb) in zip(silicon_q, silica_q)])
        frequencies = np.logspace(0, 6, 61)
        self._csv('filter_bode', ['frequency_hz', 'onchip_db', 'external_db'],
                  [(f, a[2], b[2]) for f, a, b in zip(frequencies, circuits.bode_rows(onchip, frequencies),
                                                       circuits.bode_rows(external, frequencies))])

    def stage_noise_table(self) -> None:
        ion = self.config.ion
        rows = heating_table(ion=ion)
        self.report['noise_table'] = NoiseRowSerializer(rows, many=True).data
        reference = heating_to_noise(0.6, constants.angular(constants.AXIAL_FREQUENCY), ion)
        self.report['noise_reference_v2_m2_hz'] = reference
        self.checks.append(band('noise_density_0p6', reference, constants.NOISE_DENSITY_TRAP1, 0.03))
        self._csv('noise_table', ['trap', 'rate_phonons_per_s', 'rate_error', 'axial_frequency_hz',
                                  'noise_density_v2_m2_hz', 'noise_density_error'], rows)

    def stage_thermometry(self) -> None:
        config = self.config
        omega = constants.angular(constants.AXIAL_FREQUENCY)
        eta = lamb_dicke(config.ion, omega)
        carrier = 2 * math.pi * 100e3
        signal = rabi_flop(MotionalState(0.5, omega), Sideband.BLUE, carrier, eta,
                           probe_durations(carrier * eta))
        nbar_fit = fit_nbar(signal)

        times = np.linspace(0.0, 1.5, 6)
        heating = fit_heating_rate(synthetic_heating_series(constants.REFERENCE_HEATING_RATE, 0.05, times, 0.05),
                                   omega, config.ion)

        runs = config.montecarlo_runs
        nbar_mc = run_montecarlo('nbar', runs, config.seed)
        heating_mc = run_montecarlo('heating', runs, config.seed)

        self.report['thermometry'] = {
            'lamb_dicke': eta,
            'noiseless_nbar_fit': {'truth': 0.5, 'estimate': nbar_fit.nbar, 'error': nbar_fit.error},
            'noiseless_heating_fit': {'truth': constants.REFERENCE_HEATING_RATE, 'estimate': heating.rate,
                                      'noise_density_v2_m2_hz': heating.noise_density},
            'montecarlo': {
                mc.kind: {'runs': mc.runs, 'within': mc.within, 'failures': mc.failures,
                          'coverage_sigma': mc.coverage_sigma}
                for mc in (nbar_mc, heating_mc)
            },
        }
        self.checks.extend([
            bounded('noiseless_nbar_error', abs(nbar_fit.nbar - 0.5), high=1e-4),
            bounded('noiseless_heating_error', abs(heating.rate - constants.REFERENCE_HEATING_RATE), high=1e-9),
            bounded('nbar_montecarlo_fraction', nbar_mc.fraction, low=MONTECARLO_PASS_FRACTION),
            bounded('heating_montecarlo_fraction', heating_mc.fraction, low=MONTECARLO_PASS_FRACTION),
        ])

    def stage_shuttle(self) -> None:
        config = self.config
        spec = shuttle_spec(config.solve_spec, self.layout)
        waveform = dispatch_shuttle(self.layout, config.drive, config.ion, 0.0, constants.SEGMENT_PITCH,
                                    SHUTTLE_STEPS, spec)
        worst_position, worst_drift, steps = 0.0, 0.0, []
        for z, volts in zip(waveform.waypoints, waveform.sets):
            seed = FieldPoint(0.0, self.minimum.y if self.minimum else config.seed_height, z)
            r0 = find_minimum(self.layout, config.drive, volts, config.ion, seed, spec.stray_field)
            report = secular_analysis(self.layout, config.drive, volts, config.ion, r0, spec.stray_field)
            offset = abs(r0.z - z)
            drift = abs(report.axial_frequency / spec.axial_frequency - 1)
            worst_position, worst_drift = max(worst_position, offset), max(worst_drift, drift)
            steps.append({'waypoint_m': z, 'minimum_m': list(r0.as_array()),
                          'axial_frequency_hz': report.axial_frequency / (2 * math.pi)})

        self.report['shuttle'] = {'waveform': WaveformSerializer(waveform).data, 'steps': steps}
        self.checks.append(bounded('shuttle_position_error_m', worst_position, high=SHUTTLE_POSITION_TOLERANCE))
        self.checks.append(bounded('shuttle_frequency_drift', worst_drift, high=SHUTTLE_FREQUENCY_DRIFT))
        header, rows = waveform.to_rows()
        self._csv('shuttle_waveform', header, rows)


def run_reproduce_paper(config: RunConfig,
                        progress: Optional[Callable[[str], None]] = None) -> ReproductionResult:
    """
    Execute every reproduction stage and write the bundle.
    Returns: ReproductionResult with status 0 iff every stage ran and every check passed
    """
    result = PaperReproduction(config).run()
    if progress:
        for check in result.summary['checks']:
            progress(f"{'PASS' if check['passed'] else 'FAIL'} {check['name']} = {check['value']:.6g}")
    return result
