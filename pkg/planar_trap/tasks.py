import time
from dataclasses import asdict

from celery import shared_task
from celery.utils.log import get_task_logger

from .exceptions import TrapDesignError, WaypointError
from .serializers import LayoutSerializer
from .thermometry import MonteCarloSummary, TrialOutcome, heating_trial, nbar_trial, summarize_trials
from .trap_analysis import ION_PRESETS, RFDrive
from .voltage_solver import (SolveSpec, VoltageSet, Waveform, check_shuttle, shuttle_waveform, solve_waypoint,
                             waypoints)

logger = get_task_logger(__name__)

TRIALS = {
    'nbar': nbar_trial,
    'heating': heating_trial,
}


@shared_task(bind=True)
def run_fit_trial(self, kind, seed, index, params=None):
    """One seeded Monte-Carlo fit trial"""
    try:
        outcome = TRIALS[kind](seed, index, **(params or {}))
        return {
            'status': 'success',
            'kind': kind,
            'index': index,
            'truth': outcome.truth,
            'estimate': outcome.estimate,
            'error': outcome.error,
            'within': outcome.within,
        }
    except (TrapDesignError, KeyError) as exc:
        logger.error(f"{kind} trial {index} failed: {str(exc)}")
        return {
            'status': 'error',
            'kind': kind,
            'index': index,
            'error': str(exc),
        }


@shared_task(bind=True)
def solve_shuttle_step(self, layout_data, amplitude_v, angular_frequency, ion_name, spec_data, z, index):
    """Confinement solve for one shuttling waypoint"""
    try:
        serializer = LayoutSerializer(data=layout_data)
        serializer.is_valid(raise_exception=True)
        layout = serializer.save()
        drive = RFDrive(amplitude_v, angular_frequency)
        spec = SolveSpec(**spec_data)
        volts = solve_waypoint(layout, drive, ION_PRESETS[ion_name](), spec, z, index)
        return {'status': 'success', 'index': index, 'z': z, 'volts': volts.as_dict()}
    except TrapDesignError as exc:
        logger.error(f"Shuttle step {index} failed: {str(exc)}")
        return {'status': 'error', 'index': index, 'z': z, 'error': str(exc)}


def _collect(kind, results):
    outcomes, failures = [], 0
    for result in results:
        if result.get('status') == 'success':
            outcomes.append(TrialOutcome(
                result['index'], result['truth'], result['estimate'], result['error'], result['within']))
        else:
            failures += 1
    return summarize_trials(kind, outcomes, failures)


def run_montecarlo(kind, runs, seed, params=None) -> MonteCarloSummary:
    """
    Fan the trials out through Celery; fall back to running them in-process
    when no broker is reachable.
    """
    if kind not in TRIALS:
        raise TrapDesignError(f"Unknown Monte-Carlo kind '{kind}'; choose from {', '.join(sorted(TRIALS))}")
    start_time = time.time()
    try:
        pending = [run_fit_trial.delay(kind, seed, index, params) for index in range(runs)]
        results = [task.get() for task in pending]
    except Exception as e:
        logger.warning(f"Celery not available, running synchronous Monte-Carlo trials: {e}")
        results = [run_fit_trial(kind, seed, index, params) for index in range(runs)]

    summary = _collect(kind, results)
    logger.info(f"{kind} Monte-Carlo with {runs} runs completed in {time.time() - start_time:.2f} seconds")
    return summary


def dispatch_shuttle(layout, drive, ion, from_z, to_z, n_steps, spec):
    """
    shuttle_waveform with the waypoint solves fanned out through Celery.
    Ions without a preset are solved in-process.
    """
    if ion.name not in ION_PRESETS or ION_PRESETS[ion.name]() != ion or from_z == to_z:
        return shuttle_waveform(layout, drive, ion, from_z, to_z, n_steps, spec)

    check_shuttle(layout, from_z, to_z, n_steps)
    positions = waypoints(from_z, to_z, n_steps)
    layout_data = LayoutSerializer(layout).data
    spec_data = asdict(spec)
    args = [(layout_data, drive.amplitude, drive.angular_frequency, ion.name, spec_data, float(z), k)
            for k, z in enumerate(positions)]
    try:
        pending = [solve_shuttle_step.delay(*a) for a in args]
        results = [task.get() for task in pending]
    except Exception as e:
        logger.warning(f"Celery not available, running synchronous shuttle solves: {e}")
        results = [solve_shuttle_step(*a) for a in args]

    results = sorted(results, key=lambda r: r['index'])
    for result in results:
        if result['status'] != 'success':
            raise WaypointError(result['error'], result['index'], result['z'])
    return Waveform(
        times=tuple(float(k) for k in range(n_steps)),
        sets=tuple(VoltageSet(r['volts']) for r in results),
        waypoints=tuple(float(z) for z in positions),
    )
