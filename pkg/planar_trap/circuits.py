"""
RF drive chain: LC resonator quality factor against temperature, power
dissipation, the capacitive pick-off divider and the DC line RC filters.

Capacitive loss is modelled as 1/Q_C = p tan(delta), with p the fraction of
the capacitor's field energy stored in the lossy substrate.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from . import constants
from .exceptions import CircuitError

logger = logging.getLogger(__name__)

ROOM_TEMPERATURE = 295.0


def lc_resonance(inductance: float, capacitance: float) -> float:
    """Resonance frequency 1 / (2 pi sqrt(LC)) in Hz."""
    if not (inductance > 0 and capacitance > 0):
        raise CircuitError(f"L and C must be positive, got L={inductance}, C={capacitance}")
    return 1.0 / (2 * math.pi * math.sqrt(inductance * capacitance))


def q_total(q_inductor: float, q_capacitor: float) -> float:
    """1/Q = 1/Q_L + 1/Q_C; an infinite Q_C is a lossless capacitor."""
    if not (q_inductor > 0 and q_capacitor > 0):
        raise CircuitError(f"Quality factors must be positive, got {q_inductor}, {q_capacitor}")
    return 1.0 / (1.0 / q_inductor + 1.0 / q_capacitor)


def q_capacitive(participation: float, loss_tangent: float) -> float:
    if not 0 <= participation <= 1:
        raise CircuitError(f"Participation ratio must be in [0, 1], got {participation}")
    if loss_tangent < 0:
        raise CircuitError(f"Loss tangent must be non-negative, got {loss_tangent}")
    loss = participation * loss_tangent
    return math.inf if loss == 0 else 1.0 / loss


def freeze_out_loss_tangent(tan_delta_295k: float,
                            activation_temperature: float = constants.SILICON_ACTIVATION_TEMPERATURE
                            ) -> Callable[[float], float]:
    """tan(delta)(T) = tan(delta)_295 exp(-T_a (1/T - 1/295)), carriers freezing out on cooling."""
    def loss_tangent(temperature: float) -> float:
        return tan_delta_295k * math.exp(-activation_temperature * (1.0 / temperature - 1.0 / ROOM_TEMPERATURE))
    return loss_tangent


def constant_loss_tangent(value: float) -> Callable[[float], float]:
    return lambda temperature: value


def conductivity_inductor_q(q_295k: float = constants.INDUCTOR_Q_295K,
                            q_10k: float = constants.INDUCTOR_Q_10K) -> Callable[[float], float]:
    """
    Inductor Q with 1/Q_L linear in temperature, anchored at 295 K and 10 K.
    """
    slope = (1.0 / q_295k - 1.0 / q_10k) / (ROOM_TEMPERATURE - 10.0)
    offset = 1.0 / q_10k - 10.0 * slope

    def inductor_q(temperature: float) -> float:
        return 1.0 / (offset + slope * temperature)
    return inductor_q


@dataclass(frozen=True)
class ResonatorModel:
    inductance: float
    capacitance: float
    inductor_q: Callable[[float], float]
    participation: float
    loss_tangent: Callable[[float], float]
    name: str = 'custom'

    def __post_init__(self):
        if not (self.inductance > 0 and self.capacitance > 0):
            raise CircuitError("Resonator L and C must be positive")
        if not 0 <= self.participation <= 1:
            raise CircuitError(f"Participation ratio must be in [0, 1], got {self.participation}")

    @property
    def resonance(self) -> float:
        return lc_resonance(self.inductance, self.capacitance)

    def quality(self, temperature: float) -> float:
        q_l = self.inductor_q(temperature)
        if not q_l > 0:
            raise CircuitError(f"Inductor Q must be positive, got {q_l} at {temperature} K")
        return q_total(q_l, q_capacitive(self.participation, self.loss_tangent(temperature)))


def paper_silicon_resonator() -> ResonatorModel:
    return ResonatorModel(
        inductance=constants.RESONATOR_INDUCTANCE,
        capacitance=constants.RESONATOR_CAPACITANCE,
        inductor_q=conductivity_inductor_q(),
        participation=constants.SILICON_PARTICIPATION,
        loss_tangent=freeze_out_loss_tangent(constants.SILICON_LOSS_TANGENT_295K),
        name='paper-silicon',
    )


def fused_silica_resonator() -> ResonatorModel:
    return ResonatorModel(
        inductance=constants.RESONATOR_INDUCTANCE,
        capacitance=constants.RESONATOR_CAPACITANCE,
        inductor_q=conductivity_inductor_q(),
        participation=constants.FUSED_SILICA_PARTICIPATION,
        loss_tangent=constant_loss_tangent(constants.FUSED_SILICA_LOSS_TANGENT),
        name='fused-silica',
    )


RESONATOR_PRESETS = {
    'paper-silicon': paper_silicon_resonator,
    'fused-silica': fused_silica_resonator,
}


def q_vs_temperature(model: ResonatorModel, temperatures: Sequence[float]) -> List[Tuple[float, float]]:
    rows = []
    for t in temperatures:
        if not t > 0:
            raise CircuitError(f"Temperatures must be positive, got {t}")
        rows.append((float(t), model.quality(float(t))))
    return rows


def power_dissipation(amplitude: float, capacitance: float, angular_frequency: float, quality: float) -> float:
    """P_D = U0^2 C Omega / (2 Q), watts."""
    if amplitude < 0 or not (capacitance > 0 and angular_frequency > 0 and quality > 0):
        raise CircuitError("Power dissipation needs U0 >= 0 and positive C, Omega, Q")
    return amplitude ** 2 * capacitance * angular_frequency / (2 * quality)


def parallel(*capacitances: float) -> float:
    return float(sum(capacitances))


def series(*capacitances: float) -> float:
    if any(c <= 0 for c in capacitances):
        raise CircuitError("Capacitances must be positive")
    return 1.0 / sum(1.0 / c for c in capacitances)


def divider_ratio(chain: Sequence[float], tap: int) -> Tuple[float, float]:
    """
    Series capacitive divider.
    Returns: (N, total) where the tapped capacitor sees 1/N of the input
    voltage and total is the series capacitance of the chain.
    """
    if len(chain) < 2:
        raise CircuitError("A divider needs at least two capacitors")
    if not 0 <= tap < len(chain):
        raise CircuitError(f"Tap index {tap} outside chain of {len(chain)}")
    if any(c <= 0 for c in chain):
        raise CircuitError("Divider capacitances must be positive (zero capacitance is an open circuit)")
    inverse = sum(1.0 / c for c in chain)
    return chain[tap] * inverse, 1.0 / inverse


class DividerCheck(NamedTuple):
    stated_ratio: float
    stated_total: float
    parallel_ratio: float
    parallel_total: float
    series_ratio: float
    series_total: float
    consistent: bool


def paper_divider_check(tolerance: float = 0.05) -> DividerCheck:
    """
    Compare the stated 1:400 / 2.5 pF divider with the stated parts (one
    1000 pF and two 5 pF). With the two small parts in parallel the chain
    gives 1:101 and 9.9 pF; only an all-series reading lands near the
    stated values, which contradicts the stated arrangement.
    """
    big, small = constants.DIVIDER_LARGE, constants.DIVIDER_SMALL
    parallel_ratio, parallel_total = divider_ratio([big, parallel(small, small)], 0)
    series_ratio, series_total = divider_ratio([big, small, small], 0)
    consistent = (
        math.isclose(parallel_ratio, constants.DIVIDER_STATED_RATIO, rel_tol=tolerance)
        and math.isclose(parallel_total, constants.DIVIDER_STATED_TOTAL, rel_tol=tolerance)
    )
    if not consistent:
        logger.warning(
            f"Stated divider (1:{constants.DIVIDER_STATED_RATIO:.0f}, "
            f"{constants.DIVIDER_STATED_TOTAL * 1e12:.1f} pF) does not match its parts in parallel "
            f"(1:{parallel_ratio:.0f}, {parallel_total * 1e12:.2f} pF)")
    return DividerCheck(
        constants.DIVIDER_STATED_RATIO, constants.DIVIDER_STATED_TOTAL,
        parallel_ratio, parallel_total, series_ratio, series_total, consistent,
    )


@dataclass(frozen=True)
class FilterSpec:
    resistance: float
    capacitance: float
    stages: int = 1
    name: str = 'custom'

    def __post_init__(self):
        if not (self.resistance > 0 and self.capacitance > 0):
            raise CircuitError("Filter R and C must be positive")
        if self.stages < 1:
            raise CircuitError(f"Filter needs at least one stage, got {self.stages}")

    @property
    def cutoff(self) -> float:
        return 1.0 / (2 * math.pi * self.resistance * self.capacitance)


FILTER_PRESETS = {
    'onchip': FilterSpec(constants.ONCHIP_FILTER_R, constants.ONCHIP_FILTER_C, 1, 'onchip'),
    'external': FilterSpec(constants.EXTERNAL_FILTER_R, constants.EXTERNAL_FILTER_C,
                           constants.EXTERNAL_FILTER_STAGES, 'external'),
}

# Stage coupling is ignored in rc_transfer
TRANSFER_APPROXIMATION = 'unloaded identical stages'


def rc_transfer(spec: FilterSpec, frequency: float) -> Tuple[float, float]:
    """
    Magnitude |H(f)| = (1 + (f/fc)^2)^(-n/2) of n cascaded unloaded RC
    stages, and the single-stage cutoff fc.
    """
    if frequency < 0:
        raise CircuitError(f"Frequency must be non-negative, got {frequency}")
    fc = spec.cutoff
    return (1.0 + (frequency / fc) ** 2) ** (-spec.stages / 2), fc


def cascade_cutoff(spec: FilterSpec) -> float:
    """-3 dB point of the cascade, fc sqrt(2^(1/n) - 1)."""
    return spec.cutoff * math.sqrt(2 ** (1.0 / spec.stages) - 1)


def bode_rows(spec: FilterSpec, frequencies: Sequence[float]) -> List[Tuple[float, float, float]]:
    """(f Hz, |H|, dB) rows"""
    rows = []
    for f in frequencies:
        magnitude, _ = rc_transfer(spec, f)
        rows.append((float(f), magnitude, 20 * math.log10(magnitude)))
    return rows


def default_temperature_grid() -> np.ndarray:
    return np.concatenate([np.arange(5.0, 30.0, 1.0), np.arange(30.0, 300.0, 5.0)])


def matching_network() -> Dict[str, object]:
    """Stored matching-network and RF grounding constants (no impedance model)."""
    return {
        'tunable_capacitor_range_f': list(constants.MATCHING_CAPACITOR_RANGE),
        'inductance_h': constants.MATCHING_INDUCTANCE,
        'rf_grounding_capacitance_f': constants.RF_GROUNDING_CAPACITANCE,
    }
