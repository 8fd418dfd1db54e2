"""
Sideband thermometry of a single motional mode.

Thermal populations p_n = nbar^n / (nbar + 1)^(n+1); sideband Rabi
frequencies to first order in the Lamb-Dicke parameter. Heating rates come
from a weighted straight-line fit of nbar against wait time and convert to
an electric-field noise density via S_E = 4 m hbar w ndot / q^2.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from . import constants
from .exceptions import FitError, TruncationError
from .trap_analysis import IonSpecies, calcium_40

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-10
MIN_BASIS = 50
MAX_BASIS = 5000
LAMB_DICKE_LIMIT = 0.1
NBAR_GRID = (0.01, 0.1, 1.0, 10.0)


class Sideband(enum.StrEnum):
    RED = 'red'
    BLUE = 'blue'
    CARRIER = 'carrier'


@dataclass(frozen=True)
class MotionalState:
    nbar: float
    frequency: float              # rad/s

    def __post_init__(self):
        if not self.nbar >= 0:
            raise FitError(f"Mean phonon number must be non-negative, got {self.nbar}")
        if not self.frequency > 0:
            raise FitError(f"Mode frequency must be positive, got {self.frequency}")


@dataclass(frozen=True)
class SidebandSignal:
    durations: Tuple[float, ...]
    probabilities: Tuple[float, ...]
    kind: Sideband
    carrier_rabi: float           # rad/s
    eta: float
    uncertainties: Optional[Tuple[float, ...]] = None
    lamb_dicke_ok: bool = True

    def __post_init__(self):
        if len(self.durations) != len(self.probabilities):
            raise FitError("Durations and probabilities must have equal length")
        if self.uncertainties is not None and len(self.uncertainties) != len(self.durations):
            raise FitError("Uncertainties must match the number of points")
        if any(not 0.0 <= p <= 1.0 for p in self.probabilities):
            raise FitError("Excitation probabilities must lie in [0, 1]")
        if self.eta < 0:
            raise FitError(f"Lamb-Dicke parameter must be non-negative, got {self.eta}")


class NbarFit(NamedTuple):
    nbar: float
    error: float
    rabi: float                   # fitted carrier Rabi frequency x eta, rad/s
    residuals: Tuple[float, ...]


@dataclass(frozen=True)
class HeatingResult:
    rate: float                   # phonons/s
    rate_error: float
    intercept: float
    intercept_error: float
    noise_density: Optional[float]          # V^2 m^-2 Hz^-1
    noise_density_error: Optional[float]
    residuals: Tuple[float, ...]


def lamb_dicke(ion: IonSpecies, frequency: float) -> float:
    """eta = k cos(theta) sqrt(hbar / (2 m w))"""
    if not frequency > 0:
        raise FitError(f"Mode frequency must be positive, got {frequency}")
    k = 2 * math.pi / ion.wavelength
    return abs(k * math.cos(ion.beam_angle)) * math.sqrt(constants.HBAR / (2 * ion.mass * frequency))


def sideband_ratio_to_nbar(ratio: float) -> float:
    """nbar = R / (1 - R) for R = P_red / P_blue of a thermal state."""
    if not 0 <= ratio < 1:
        raise FitError(f"Sideband ratio must be in [0, 1) for a thermal state, got {ratio}")
    return ratio / (1 - ratio)


def truncation_size(nbar: float) -> int:
    """
    Smallest basis size meeting the tail bound, never below
    max(50, 20 (nbar + 1)).
    """
    n_max = max(MIN_BASIS, math.ceil(20 * (nbar + 1)))
    if nbar > 0:
        ratio = nbar / (nbar + 1)
        n_max = max(n_max, math.ceil(math.log(TAIL_MASS) / math.log(ratio)))
    if n_max > MAX_BASIS:
        raise TruncationError(f"nbar = {nbar} needs {n_max} levels, above the limit of {MAX_BASIS}")
    return n_max


def thermal_populations(nbar: float, n_max: Optional[int] = None) -> np.ndarray:
    if nbar < 0:
        raise FitError(f"Mean phonon number must be non-negative, got {nbar}")
    size = truncation_size(nbar) if n_max is None else n_max
    n = np.arange(size + 1)
    if nbar == 0:
        p = np.zeros(size + 1)
        p[0] = 1.0
        return p
    ratio = nbar / (nbar + 1)
    p = np.exp(n * math.log(ratio)) / (nbar + 1)
    if 1.0 - p.sum() > TAIL_MASS:
        raise TruncationError(f"Basis of {size} levels leaves tail mass {1.0 - p.sum():.2e} for nbar = {nbar}")
    return p


def _rabi_frequencies(kind: Sideband, rabi: float, eta: float, n: np.ndarray) -> np.ndarray:
    if kind == Sideband.BLUE:
        return rabi * eta * np.sqrt(n + 1)
    if kind == Sideband.RED:
        return rabi * eta * np.sqrt(n)
    return np.full(n.shape, float(rabi))


def _excitation(times: np.ndarray, populations: np.ndarray, frequencies: np.ndarray,
                decay: float = 0.0) -> np.ndarray:
    phases = np.outer(times, frequencies)
    if decay > 0:
        contrast = np.exp(-decay * times)[:, None]
        terms = 0.5 * (1 - contrast * np.cos(phases))
    else:
        terms = np.sin(phases / 2) ** 2
    return np.clip(terms @ populations, 0.0, 1.0)


def rabi_flop(state: MotionalState, kind: str, carrier_rabi: float, eta: float,
              durations: Sequence[float], decay: float = 0.0) -> SidebandSignal:
    """
    Excitation probability sum_n p_n sin^2(Omega_n t / 2) after each probe
    duration. With decay > 0 the contrast falls as exp(-decay t).
    """
    kind = Sideband(kind)
    populations = thermal_populations(state.nbar)
    n = np.arange(len(populations))
    times = np.asarray(durations, dtype=float)
    probabilities = _excitation(times, populations, _rabi_frequencies(kind, carrier_rabi, eta, n), decay)

    lamb_dicke_ok = eta ** 2 * (state.nbar + 1) <= LAMB_DICKE_LIMIT
    if not lamb_dicke_ok:
        logger.warning(f"eta^2 (nbar + 1) = {eta ** 2 * (state.nbar + 1):.3f} is outside the Lamb-Dicke regime")

    return SidebandSignal(
        durations=tuple(float(t) for t in times),
        probabilities=tuple(float(p) for p in probabilities),
        kind=kind,
        carrier_rabi=float(carrier_rabi),
        eta=float(eta),
        lamb_dicke_ok=lamb_dicke_ok,
    )


def _flop_model(kind: Sideband, n_max: int):
    n = np.arange(n_max + 1)

    def model(times, nbar, rabi):
        nbar = max(nbar, 0.0)
        if nbar == 0:
            p = np.zeros(n_max + 1)
            p[0] = 1.0
        else:
            p = np.exp(n * math.log(nbar / (nbar + 1))) / (nbar + 1)
        return _excitation(np.asarray(times), p, _rabi_frequencies(kind, rabi, 1.0, n))
    return model


def fit_nbar(signal: SidebandSignal, fit_rabi: bool = False) -> NbarFit:
    """
    Weighted least-squares fit of nbar (and optionally the sideband Rabi
    frequency) to a Rabi-flop trace. A fixed grid over nbar seeds the local
    refinement, so results are deterministic.
    """
    times = np.asarray(signal.durations, dtype=float)
    data = np.asarray(signal.probabilities, dtype=float)
    kind = Sideband(signal.kind)
    if kind == Sideband.CARRIER:
        raise FitError("nbar fits need a red or blue sideband trace")
    if len(times) < 5:
        raise FitError(f"Need at least 5 points, got {len(times)}")
    if np.ptp(data) == 0:
        raise FitError("Degenerate data: all excitation probabilities are equal")

    rabi0 = signal.carrier_rabi * signal.eta
    if not rabi0 > 0:
        raise FitError("Sideband Rabi frequency must be positive")
    if np.ptp(times) * rabi0 < math.pi:
        raise FitError("Durations must span at least half a sideband Rabi period")

    sigma = None
    if signal.uncertainties is not None:
        sigma = np.asarray(signal.uncertainties, dtype=float)
        if np.any(sigma <= 0):
            raise FitError("Uncertainties must be positive")
    weights = 1.0 if sigma is None else 1.0 / sigma ** 2

    def cost(nbar):
        model = _flop_model(kind, truncation_size(nbar))
        return float(np.sum(weights * (model(times, nbar, rabi0) - data) ** 2))

    start = min(NBAR_GRID, key=cost)

    estimate = start
    for _ in range(3):
        n_max = truncation_size(max(4 * estimate, 10.0))
        model = _flop_model(kind, n_max)
        if fit_rabi:
            f, p0, lower, upper = model, [estimate, rabi0], [0.0, 0.0], [np.inf, np.inf]
        else:
            def f(t, nbar):
                return model(t, nbar, rabi0)
            p0, lower, upper = [estimate], [0.0], [np.inf]
        try:
            params, covariance = curve_fit(
                f, times, data, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
                bounds=(lower, upper), ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=2000,
            )
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"nbar fit did not converge: {exc}") from exc
        estimate = float(params[0])
        if truncation_size(estimate) <= n_max:
            break

    error = float(math.sqrt(covariance[0, 0])) if np.isfinite(covariance[0, 0]) else math.inf
    rabi = float(params[1]) if fit_rabi else rabi0
    residuals = data - model(times, estimate, rabi)
    logger.debug(f"Fitted nbar = {estimate:.6f} +/- {error:.2e}")
    return NbarFit(estimate, error, rabi, tuple(float(r) for r in residuals))


def heating_to_noise(rate: float, frequency: float, ion: IonSpecies) -> float:
    """S_E = 4 m hbar w ndot / q^2, V^2 m^-2 Hz^-1."""
    if rate < 0:
        raise FitError(f"Heating rate must be non-negative, got {rate}")
    if not frequency > 0:
        raise FitError(f"Mode frequency must be positive, got {frequency}")
    return 4 * ion.mass * constants.HBAR * frequency * rate / ion.charge ** 2


def noise_to_heating(noise_density: float, frequency: float, ion: IonSpecies) -> float:
    if noise_density < 0:
        raise FitError(f"Noise density must be non-negative, got {noise_density}")
    if not frequency > 0:
        raise FitError(f"Mode frequency must be positive, got {frequency}")
    return noise_density * ion.charge ** 2 / (4 * ion.mass * constants.HBAR * frequency)


def fit_heating_rate(series: Sequence[Tuple[float, float, float]], frequency: Optional[float] = None,
                     ion: Optional[IonSpecies] = None) -> HeatingResult:
    """
    Weighted straight-line fit nbar(t) = nbar0 + ndot t.
    series: (wait time s, nbar, sigma) triples. When frequency and ion are
    given the slope is also expressed as a noise density; a negative slope
    leaves it None with only its error bar set.
    """
    if len(series) < 3:
        raise FitError(f"Need at least 3 points for a heating-rate fit, got {len(series)}")
    data = np.asarray(series, dtype=float)
    times, nbar, sigma = data[:, 0], data[:, 1], data[:, 2]
    if len(np.unique(times)) < 2:
        raise FitError("Singular design: all wait times are equal")
    if np.any(sigma <= 0):
        raise FitError("Phonon-number uncertainties must be positive")

    coefficients, covariance = np.polyfit(times, nbar, 1, w=1.0 / sigma, cov='unscaled')
    rate, intercept = float(coefficients[0]), float(coefficients[1])
    rate_error = float(math.sqrt(covariance[0, 0]))
    intercept_error = float(math.sqrt(covariance[1, 1]))
    residuals = nbar - np.polyval(coefficients, times)

    noise = noise_error = None
    if frequency is not None and ion is not None:
        if rate >= 0:
            noise = heating_to_noise(rate, frequency, ion)
        noise_error = heating_to_noise(rate_error, frequency, ion)

    logger.info(f"Heating rate {rate:.4f} +/- {rate_error:.4f} phonons/s")
    if rate < 0:
        logger.warning(f"Negative heating rate {rate:.4f} phonons/s has no noise density")
    return HeatingResult(rate, rate_error, intercept, intercept_error, noise, noise_error,
                         tuple(float(r) for r in residuals))


class NoiseRow(NamedTuple):
    trap: int
    rate: float
    rate_error: float
    axial_frequency_hz: float
    noise_density: float
    noise_density_error: float


def heating_table(rows: Sequence[Tuple[int, float, float, float]] = constants.HEATING_TABLE,
                  ion: Optional[IonSpecies] = None) -> List[NoiseRow]:
    """Convert (trap, ndot, sigma, axial Hz) rows to noise densities."""
    ion = ion or calcium_40()
    table = []
    for trap, rate, error, frequency_hz in rows:
        omega = constants.angular(frequency_hz)
        table.append(NoiseRow(
            int(trap), float(rate), float(error), float(frequency_hz),
            heating_to_noise(rate, omega, ion), heating_to_noise(error, omega, ion),
        ))
    return table


def add_gaussian_noise(probabilities: Sequence[float], sigma: float, rng: np.random.Generator) -> np.ndarray:
    noisy = np.asarray(probabilities, dtype=float) + rng.normal(0.0, sigma, len(probabilities))
    return np.clip(noisy, 0.0, 1.0)


def add_projection_noise(probabilities: Sequence[float], shots: int, rng: np.random.Generator) -> np.ndarray:
    """Binomial quantum projection noise at a fixed number of shots per point."""
    if shots < 1:
        raise FitError(f"Shot count must be positive, got {shots}")
    p = np.clip(np.asarray(probabilities, dtype=float), 0.0, 1.0)
    return rng.binomial(shots, p) / shots


def noisy_signal(signal: SidebandSignal, rng: np.random.Generator, sigma: Optional[float] = None,
                 shots: Optional[int] = None) -> SidebandSignal:
    """Copy of signal with Gaussian (sigma) or binomial (shots) noise and matching uncertainties."""
    if shots is not None:
        values = add_projection_noise(signal.probabilities, shots, rng)
        spread = np.sqrt(np.clip(np.asarray(signal.probabilities) * (1 - np.asarray(signal.probabilities)), 0, None) / shots)
        uncertainties = np.maximum(spread, 1.0 / shots)
    elif sigma is not None:
        values = add_gaussian_noise(signal.probabilities, sigma, rng)
        uncertainties = np.full(len(values), sigma)
    else:
        raise FitError("Either sigma or shots is required")
    return SidebandSignal(
        durations=signal.durations,
        probabilities=tuple(float(v) for v in values),
        kind=signal.kind,
        carrier_rabi=signal.carrier_rabi,
        eta=signal.eta,
        uncertainties=tuple(float(u) for u in uncertainties),
        lamb_dicke_ok=signal.lamb_dicke_ok,
    )


def synthetic_heating_series(rate: float, intercept: float, times: Sequence[float], sigma: float,
                             rng: Optional[np.random.Generator] = None) -> List[Tuple[float, float, float]]:
    values = intercept + rate * np.asarray(times, dtype=float)
    if rng is not None:
        values = values + rng.normal(0.0, sigma, len(values))
    return [(float(t), float(v), float(sigma)) for t, v in zip(times, values)]


def probe_durations(rabi: float, points: int = 25, periods: float = 2.0) -> np.ndarray:
    """Durations covering the given number of sideband Rabi periods."""
    return np.linspace(0.0, periods * 2 * math.pi / rabi, points)


class TrialOutcome(NamedTuple):
    index: int
    truth: float
    estimate: float
    error: float
    within: bool


class MonteCarloSummary(NamedTuple):
    kind: str
    runs: int
    within: int
    failures: int
    coverage_sigma: float
    outcomes: Tuple[TrialOutcome, ...]

    @property
    def fraction(self) -> float:
        return self.within / self.runs if self.runs else 0.0


COVERAGE_SIGMA = 3.0
DEFAULT_CARRIER_RABI = 2 * math.pi * 100e3      # rad/s


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of the index-th child of SeedSequence(seed), as spawn() would hand out."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _outcome(index: int, truth: float, estimate: float, error: float) -> TrialOutcome:
    within = bool(math.isfinite(error) and abs(estimate - truth) <= COVERAGE_SIGMA * error)
    return TrialOutcome(index, float(truth), float(estimate), float(error), within)


def nbar_trial(seed: int, index: int, nbar: float = 1.0, sigma: float = 0.02, points: int = 25,
               frequency: float = constants.angular(constants.AXIAL_FREQUENCY),
               carrier_rabi: float = DEFAULT_CARRIER_RABI) -> TrialOutcome:
    """One noisy blue-sideband flop at nbar, refitted."""
    eta = lamb_dicke(calcium_40(), frequency)
    durations = probe_durations(carrier_rabi * eta, points)
    clean = rabi_flop(MotionalState(nbar, frequency), Sideband.BLUE, carrier_rabi, eta, durations)
    fit = fit_nbar(noisy_signal(clean, trial_rng(seed, index), sigma=sigma))
    return _outcome(index, nbar, fit.nbar, fit.error)


def heating_trial(seed: int, index: int, rate: float = constants.REFERENCE_HEATING_RATE,
                  intercept: float = 0.05, sigma: float = 0.05, points: int = 6,
                  duration: float = 1.5) -> TrialOutcome:
    """One noisy linear heating series, refitted."""
    times = np.linspace(0.0, duration, points)
    series = synthetic_heating_series(rate, intercept, times, sigma, trial_rng(seed, index))
    result = fit_heating_rate(series)
    return _outcome(index, rate, result.rate, result.rate_error)


def summarize_trials(kind: str, outcomes: Sequence[TrialOutcome], failures: int = 0) -> MonteCarloSummary:
    outcomes = tuple(sorted(outcomes, key=lambda o: o.index))
    runs = len(outcomes) + failures
    within = sum(1 for o in outcomes if o.within)
    logger.info(f"{kind} Monte-Carlo: {within}/{runs} within {COVERAGE_SIGMA:.0f} sigma")
    return MonteCarloSummary(kind, runs, within, failures, COVERAGE_SIGMA, outcomes)
