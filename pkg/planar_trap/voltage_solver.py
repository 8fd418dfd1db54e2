"""
DC voltage solving: axial confinement, stray-field compensation and
shuttling waveforms.

Unknowns are the voltages of the allowed electrodes (left/right segment
pairs optionally tied together). The targets at the trap point are linear
in those voltages:

    sum_e V_e grad(phi_e) = E_stray - (e/q) grad(U_pp)       (zero net force)
    L * sum_e V_e d2(phi_e)/dz2 = L * (m w^2 - e d2(U_pp)/dz2) / q

with L = 100 um bringing the curvature row to field units. The system is
solved with Tikhonov regularisation and hard bounds (bounded-variable least
squares), then the curvature target is refined against the secular
frequency actually obtained.
"""
import logging
import math
from collections.abc import Mapping as MappingABC
from dataclasses import dataclass, replace
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import lsq_linear

from . import constants
from .exceptions import (ConvergenceError, InfeasibleBoundError, RankDeficiencyError,
                         SolverError, TrapDesignError, WaypointError)
from .field_core import as_points, electrode_basis
from .geometry import ElectrodeLayout, segment_partner
from .trap_analysis import (IonSpecies, RFDrive, TrapPotential, find_minimum, rf_nil,
                            secular_analysis)

logger = logging.getLogger(__name__)

CURVATURE_LENGTH = 100e-6       # m
FREQUENCY_TOLERANCE = 1e-3      # relative
REFINE_TARGET = 1e-4            # relative, stop refining below this
DEFAULT_ALLOWED = ('centre', 'dc_L3', 'dc_L4', 'dc_L5', 'dc_R3', 'dc_R4', 'dc_R5')


class VoltageSet(MappingABC):
    """Immutable electrode name -> volts mapping."""

    def __init__(self, volts: Optional[Mapping[str, float]] = None):
        values = {str(name): float(v) for name, v in (volts or {}).items()}
        bad = [name for name, v in values.items() if not math.isfinite(v)]
        if bad:
            raise SolverError(f"Non-finite voltages for {', '.join(sorted(bad))}")
        self._volts = dict(sorted(values.items()))

    def __getitem__(self, name: str) -> float:
        return self._volts[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._volts)

    def __len__(self) -> int:
        return len(self._volts)

    def __repr__(self) -> str:
        return f"VoltageSet({self._volts})"

    def __add__(self, other: Mapping[str, float]) -> 'VoltageSet':
        names = set(self) | set(other)
        return VoltageSet({n: self.get(n, 0.0) + other.get(n, 0.0) for n in names})

    def __sub__(self, other: Mapping[str, float]) -> 'VoltageSet':
        names = set(self) | set(other)
        return VoltageSet({n: self.get(n, 0.0) - other.get(n, 0.0) for n in names})

    def scaled(self, factor: float) -> 'VoltageSet':
        return VoltageSet({n: v * factor for n, v in self._volts.items()})

    def max_abs(self) -> float:
        return max((abs(v) for v in self._volts.values()), default=0.0)

    def norm(self) -> float:
        return float(np.linalg.norm(list(self._volts.values()))) if self._volts else 0.0

    def as_dict(self) -> Dict[str, float]:
        return dict(self._volts)


@dataclass(frozen=True)
class SolveSpec:
    axial_frequency: float = constants.angular(constants.AXIAL_FREQUENCY)   # rad/s; 0 = no axial target
    target_position: Optional[Tuple[float, float, float]] = None           # None = RF nil at z = 0
    stray_field: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    allowed: Tuple[str, ...] = DEFAULT_ALLOWED
    bound: float = constants.DC_VOLTAGE_BOUND
    regularization: float = 1e-4                                          # V^-2
    pair_segments: bool = True
    max_refinements: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'allowed', tuple(self.allowed))
        object.__setattr__(self, 'stray_field', tuple(float(v) for v in self.stray_field))
        if self.target_position is not None:
            object.__setattr__(self, 'target_position', tuple(float(v) for v in self.target_position))
        if not self.bound > 0:
            raise SolverError(f"Voltage bound must be positive, got {self.bound}")
        if self.axial_frequency < 0:
            raise SolverError(f"Axial frequency must be non-negative, got {self.axial_frequency}")
        if not self.allowed:
            raise SolverError("At least one electrode must be allowed to vary")
        if self.regularization < 0:
            raise SolverError("Regularization weight must be non-negative")


@dataclass(frozen=True)
class Waveform:
    times: Tuple[float, ...]
    sets: Tuple[VoltageSet, ...]
    waypoints: Tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.sets) or len(self.sets) != len(self.waypoints):
            raise SolverError("Waveform times, voltage sets and waypoints must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise SolverError("Waveform times must be strictly increasing")

    @property
    def electrode_names(self) -> List[str]:
        return sorted({name for s in self.sets for name in s})

    def max_abs(self) -> float:
        return max((s.max_abs() for s in self.sets), default=0.0)

    def to_rows(self) -> Tuple[List[str], List[List[float]]]:
        names = self.electrode_names
        header = ['time_s'] + names
        rows = [[t] + [s.get(n, 0.0) for n in names] for t, s in zip(self.times, self.sets)]
        return header, rows

    def reversed(self) -> 'Waveform':
        return Waveform(self.times, tuple(reversed(self.sets)), tuple(reversed(self.waypoints)))


def _groups(layout: ElectrodeLayout, allowed: Sequence[str], paired: bool) -> List[Tuple[str, ...]]:
    """Unknown columns: each a tuple of electrodes driven at one voltage."""
    unknown = [name for name in allowed if name not in layout]
    if unknown:
        raise SolverError(f"Allowed electrodes not in layout: {', '.join(unknown)}")
    groups, seen = [], set()
    for name in allowed:
        if name in seen:
            continue
        partner = segment_partner(name) if paired else None
        if partner is not None and partner in allowed and partner not in seen:
            group = tuple(sorted((name, partner)))
        else:
            group = (name,)
        seen.update(group)
        groups.append(group)
    return groups


def _system(layout: ElectrodeLayout, groups: List[Tuple[str, ...]], r: np.ndarray,
            with_curvature: bool) -> np.ndarray:
    names = [name for group in groups for name in group]
    basis = electrode_basis(layout, r, names)
    columns = []
    for group in groups:
        idx = [basis.names.index(name) for name in group]
        gradient = basis.gradient[idx].sum(axis=0)
        column = list(gradient)
        if with_curvature:
            column.append(CURVATURE_LENGTH * basis.hessian[idx, 2, 2].sum())
        columns.append(column)
    return np.array(columns, dtype=float).T


def _expand(groups: List[Tuple[str, ...]], values: np.ndarray) -> VoltageSet:
    return VoltageSet({name: float(v) for group, v in zip(groups, values) for name in group})


def _bounded_solve(a: np.ndarray, b: np.ndarray, groups: List[Tuple[str, ...]],
                   lower: np.ndarray, upper: np.ndarray, regularization: float) -> np.ndarray:
    """Tikhonov-regularised least squares with hard bounds, checked for feasibility."""
    tolerance = max(min(1e-4 * np.linalg.norm(b), 0.01), 1e-12)

    # Exact targets must be reachable at all before bounds come into play
    exact, *_ = np.linalg.lstsq(a, b, rcond=None)
    if np.linalg.norm(a @ exact - b) > tolerance:
        rank = np.linalg.matrix_rank(a)
        raise RankDeficiencyError(
            f"Electrodes {', '.join('+'.join(g) for g in groups)} cannot produce the requested "
            f"field and curvature (rank {rank} for {a.shape[0]} targets)")

    n = a.shape[1]
    a_aug = np.vstack([a, math.sqrt(regularization) * np.eye(n)])
    b_aug = np.concatenate([b, np.zeros(n)])
    result = lsq_linear(a_aug, b_aug, bounds=(lower, upper), method='bvls', tol=1e-14, max_iter=1000)
    x = result.x

    residual = np.linalg.norm(a @ x - b)
    if residual > tolerance:
        at_bound = [
            '+'.join(group) for group, v, lo, hi in zip(groups, x, lower, upper)
            if math.isclose(v, lo, abs_tol=1e-9) or math.isclose(v, hi, abs_tol=1e-9)
        ]
        raise InfeasibleBoundError(
            f"Targets unreachable within voltage bounds; active bound on {', '.join(at_bound) or 'none'} "
            f"(residual {residual:.3e})", at_bound)
    return x


def _target_point(layout, drive, ion, spec: SolveSpec) -> np.ndarray:
    if spec.target_position is not None:
        return as_points(spec.target_position)[0]
    return rf_nil(layout, drive, ion).as_array()


def _achieved_axial(layout, drive, ion, volts, target, stray) -> Tuple[float, np.ndarray]:
    r0 = find_minimum(layout, drive, volts, ion, target, stray)
    report = secular_analysis(layout, drive, volts, ion, r0, stray)
    if report.imaginary:
        raise ConvergenceError(f"Solved set does not confine: frequencies {report.frequencies}")
    return report.axial_frequency, r0.as_array()


def _solve_groups(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies, spec: SolveSpec,
                  groups: List[Tuple[str, ...]], target: np.ndarray, stray: np.ndarray) -> VoltageSet:
    omega = spec.axial_frequency
    with_curvature = omega > 0

    potential = TrapPotential(layout, drive, ion)
    _, pp_gradient, pp_hessian = potential.evaluate(target)
    q = ion.charge
    e = constants.ELEMENTARY_CHARGE

    a = _system(layout, groups, target, with_curvature)
    field_target = stray - (e / q) * pp_gradient
    curvature = (ion.mass * omega ** 2 - e * pp_hessian[2, 2]) / q

    lower = np.full(len(groups), -spec.bound)
    upper = np.full(len(groups), spec.bound)

    logger.info(f"Solving confinement at {target} over {len(groups)} unknowns, "
                f"target {omega / (2 * math.pi) / 1e6:.4f} MHz")

    volts, error = None, 0.0
    for attempt in range(spec.max_refinements + 1):
        b = np.concatenate([field_target, [CURVATURE_LENGTH * curvature]]) if with_curvature else field_target
        values = _bounded_solve(a, b, groups, lower, upper, spec.regularization)
        volts = _expand(groups, values)
        if not with_curvature:
            break

        achieved, _ = _achieved_axial(layout, drive, ion, volts, target, stray)
        error = achieved / omega - 1
        logger.debug(f"Refinement {attempt}: axial {achieved / (2 * math.pi):.1f} Hz, error {error:.2e}")
        if abs(error) < REFINE_TARGET:
            break
        curvature += ion.mass * (omega ** 2 - achieved ** 2) / q

    if abs(error) > FREQUENCY_TOLERANCE:
        raise ConvergenceError(
            f"Axial frequency still off by {error:.2e} after {spec.max_refinements} refinements")
    logger.info(f"Solved set: max |V| = {volts.max_abs():.3f} V")
    return volts


def solve_confinement(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies,
                      spec: SolveSpec) -> VoltageSet:
    """
    Voltages over spec.allowed that hold the ion at the target point with the
    requested axial frequency, within |V| <= spec.bound.

    With spec.pair_segments the left/right partners are tied first; when that
    set is out of bounds, rank deficient or fails to confine, the pairs are
    released and the solve is repeated with independent segments.
    """
    target = _target_point(layout, drive, ion, spec)
    stray = np.asarray(spec.stray_field)
    groups = _groups(layout, spec.allowed, spec.pair_segments)
    try:
        return _solve_groups(layout, drive, ion, spec, groups, target, stray)
    except (SolverError, ConvergenceError) as exc:
        unpaired = _groups(layout, spec.allowed, False)
        if unpaired == groups:
            raise
        logger.warning(f"Paired solve failed ({exc}); releasing segment pairs")
    return _solve_groups(layout, drive, ion, spec, unpaired, target, stray)


def compensate(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies,
               stray: Sequence[float], base: Mapping[str, float], spec: SolveSpec) -> VoltageSet:
    """
    Add the smallest bounded correction to base whose field at the RF nil
    cancels the stray field, with no change in axial curvature there.
    """
    stray = np.asarray(stray, dtype=float)
    base = VoltageSet(base)
    if not np.any(stray):
        return base

    target = _target_point(layout, drive, ion, spec)
    # Pairs can only make an x-field by moving apart
    groups = _groups(layout, spec.allowed, spec.pair_segments and stray[0] == 0)
    if any(len({base.get(name, 0.0) for name in group}) > 1 for group in groups):
        groups = _groups(layout, spec.allowed, False)

    a = _system(layout, groups, target, with_curvature=True)
    b = np.concatenate([stray, [0.0]])

    base_values = np.array([base.get(group[0], 0.0) for group in groups])
    lower = -spec.bound - base_values
    upper = spec.bound - base_values

    values = _bounded_solve(a, b, groups, lower, upper, spec.regularization)
    delta = _expand(groups, values)
    logger.info(f"Compensation delta norm {delta.norm():.4f} V for stray field {stray} V/m")
    return base + delta


def shuttle_spec(spec: SolveSpec, layout: ElectrodeLayout) -> SolveSpec:
    """
    Spec for shuttling solves: the centre electrode and every segment of the
    layout, unpaired, since the trap point walks along the whole column.
    """
    allowed = tuple(name for name in ('centre',) if name in layout) + tuple(layout.segment_names)
    return replace(spec, allowed=allowed or spec.allowed, pair_segments=False)


def waypoints(from_z: float, to_z: float, n_steps: int) -> np.ndarray:
    return np.linspace(from_z, to_z, n_steps)


def solve_waypoint(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies,
                   spec: SolveSpec, z: float, index: int = 0) -> VoltageSet:
    """Confinement solve with the trap point moved to the RF nil at axial position z."""
    try:
        nil = rf_nil(layout, drive, ion, z=z)
        return solve_confinement(layout, drive, ion, replace(spec, target_position=tuple(nil.as_array())))
    except TrapDesignError as exc:
        raise WaypointError(f"Waypoint {index} at z = {z * 1e6:.1f} um infeasible: {exc}", index, z) from exc


def check_shuttle(layout: ElectrodeLayout, from_z: float, to_z: float, n_steps: int) -> None:
    if n_steps < 2:
        raise SolverError(f"Shuttling needs at least 2 steps, got {n_steps}")
    z_min, z_max = layout.segment_span()
    for z in (from_z, to_z):
        if not z_min <= z <= z_max:
            raise SolverError(f"Shuttle endpoint z = {z * 1e6:.1f} um outside the segment span "
                              f"[{z_min * 1e6:.1f}, {z_max * 1e6:.1f}] um")


def shuttle_waveform(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies,
                     from_z: float, to_z: float, n_steps: int, spec: SolveSpec) -> Waveform:
    """
    One confinement solve per linearly spaced waypoint, on unit time steps.
    """
    check_shuttle(layout, from_z, to_z, n_steps)
    positions = waypoints(from_z, to_z, n_steps)

    sets = []
    if from_z == to_z:
        fixed = solve_waypoint(layout, drive, ion, spec, from_z)
        sets = [fixed] * n_steps
    else:
        for k, z in enumerate(positions):
            logger.info(f"Shuttle step {k + 1}/{n_steps}: z = {z * 1e6:.1f} um")
            sets.append(solve_waypoint(layout, drive, ion, spec, float(z), k))

    return Waveform(
        times=tuple(float(k) for k in range(n_steps)),
        sets=tuple(sets),
        waypoints=tuple(float(z) for z in positions),
    )
