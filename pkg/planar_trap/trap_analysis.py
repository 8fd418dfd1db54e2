"""
Ponderomotive analysis of a planar trap.

Energies are in eV, positions in metres. The total potential seen by the
ion is the pseudopotential of the RF electrodes plus the DC electrostatic
energy and an optional uniform stray field:

    U(r) = q^2 |E_rf(r)|^2 / (4 m Omega^2 e) + (q/e) (phi_dc(r) - E_stray . r)
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from . import constants
from .exceptions import ConvergenceError, EscapeError, FieldEvaluationError
from .field_core import FieldPoint, RectStack, as_points, check_voltage_names
from .geometry import ElectrodeLayout

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-3       # eV/m
RIDGE_TOLERANCE = 1e-2          # eV/m
MAX_ITERATIONS = 200
MIN_ION_HEIGHT = 1e-6           # m
DEPTH_BOX = 5e-3                # m, edge of the cubic search box
DEPTH_SCAN_POINTS = 120
STABILITY_LIMIT = 0.9
# Step for the third-derivative term of the pseudopotential Hessian
THIRD_DERIVATIVE_STEP = 1e-8    # m


@dataclass(frozen=True)
class RFDrive:
    amplitude: float              # V, zero-to-peak
    angular_frequency: float      # rad/s

    def __post_init__(self):
        if not (self.amplitude > 0 and self.angular_frequency > 0):
            raise FieldEvaluationError(
                f"RF drive needs positive amplitude and frequency, got "
                f"{self.amplitude} V, {self.angular_frequency} rad/s")

    @classmethod
    def from_hz(cls, amplitude: float, frequency_hz: float) -> 'RFDrive':
        return cls(amplitude, constants.angular(frequency_hz))

    @property
    def frequency_hz(self) -> float:
        return self.angular_frequency / (2 * math.pi)

    def scaled(self, factor: float) -> 'RFDrive':
        return RFDrive(self.amplitude * factor, self.angular_frequency)


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float                   # kg
    charge: float                 # C
    wavelength: float             # m, transition used for sideband probing
    beam_angle: float             # rad, between probe beam and the mode axis

    def __post_init__(self):
        if not self.mass > 0:
            raise FieldEvaluationError(f"Ion mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise FieldEvaluationError("Ion charge must be non-zero")

    @property
    def charge_number(self) -> float:
        return self.charge / constants.ELEMENTARY_CHARGE


def calcium_40() -> IonSpecies:
    return IonSpecies(
        name='ca40',
        mass=constants.CA40_MASS_U * constants.ATOMIC_MASS_UNIT,
        charge=constants.ELEMENTARY_CHARGE,
        wavelength=constants.CA40_WAVELENGTH,
        beam_angle=math.radians(constants.CA40_BEAM_ANGLE_DEG),
    )


ION_PRESETS = {'ca40': calcium_40}


@dataclass(frozen=True)
class TrapReport:
    position: Tuple[float, float, float]
    ion_height: float
    frequencies: Tuple[float, float, float]               # rad/s, descending; negative = imaginary
    principal_axes: Tuple[Tuple[float, float, float], ...]  # one unit vector per frequency
    tilt_deg: float
    q_matrix: Tuple[Tuple[float, float, float], ...]
    q_max: float
    stable: bool
    imaginary: bool
    axial_index: int
    rf_field_residual: float                              # V/m at the minimum
    depth: Optional[float] = None                         # eV, total potential
    escape_point: Optional[Tuple[float, float, float]] = None
    depth_bounded: bool = False
    rf_depth: Optional[float] = None                      # eV, pseudopotential alone
    rf_escape_point: Optional[Tuple[float, float, float]] = None

    @property
    def axial_frequency(self) -> float:
        return self.frequencies[self.axial_index]

    @property
    def confining(self) -> bool:
        return not self.imaginary


class TrapDepth(NamedTuple):
    depth: float
    escape_point: Tuple[float, float, float]
    bounded: bool


class TrapPotential:
    """
    Total potential of one configuration, with analytic gradient and
    Hessian. The pseudopotential Hessian needs third derivatives of the RF
    potential along the field direction; those come from a central
    difference of the analytic Hessian.
    """

    def __init__(self, layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies,
                 volts: Optional[Mapping[str, float]] = None,
                 stray_field: Optional[Sequence[float]] = None):
        volts = dict(volts or {})
        check_voltage_names(layout, volts)
        if not layout.rf_names:
            raise FieldEvaluationError("Trap analysis needs at least one RF electrode")

        self.layout = layout
        self.drive = drive
        self.ion = ion
        self.volts = volts
        self.stray_field = np.zeros(3) if stray_field is None else np.asarray(stray_field, dtype=float)

        self._rf = RectStack(layout, layout.rf_names)
        dc_names = [name for name in layout.names if volts.get(name, 0.0) != 0.0]
        self._dc = RectStack(layout, dc_names) if dc_names else None
        self._dc_volts = np.array([volts[name] for name in dc_names], dtype=float)

        self.charge_number = ion.charge_number
        # eV per (V/m)^2 of RF field amplitude
        self.k = ion.charge ** 2 / (4 * ion.mass * drive.angular_frequency ** 2 * constants.ELEMENTARY_CHARGE)

    @property
    def has_dc(self) -> bool:
        return self._dc is not None or bool(np.any(self.stray_field))

    def rf_gradient(self, r) -> Tuple[np.ndarray, np.ndarray]:
        """RF potential gradient G (V/m) and Hessian (V/m^2) at amplitude U0."""
        _, grad, hess = self._rf.evaluate(r)
        u0 = self.drive.amplitude
        return u0 * grad[0].sum(axis=0), u0 * hess[0].sum(axis=0)

    def _rf_hessian(self, r) -> np.ndarray:
        _, _, hess = self._rf.evaluate(r)
        return self.drive.amplitude * hess[0].sum(axis=0)

    def pseudopotential(self, r) -> float:
        r = as_points(r)[0]
        _, grad, _ = self._rf.evaluate(r, order=1)
        g = self.drive.amplitude * grad[0].sum(axis=0)
        return float(self.k * g @ g)

    def energy(self, r) -> float:
        r = as_points(r)[0]
        u = self.pseudopotential(r)
        if self._dc is not None:
            phi, _, _ = self._dc.evaluate(r, order=0)
            u += self.charge_number * float(phi[0] @ self._dc_volts)
        if np.any(self.stray_field):
            u -= self.charge_number * float(self.stray_field @ r)
        return u

    def evaluate(self, r) -> Tuple[float, np.ndarray, np.ndarray]:
        """Energy (eV), gradient (eV/m) and Hessian (eV/m^2) at r."""
        r = as_points(r)[0]
        g, h = self.rf_gradient(r)

        u = self.k * float(g @ g)
        gradient = 2 * self.k * (h @ g)

        g_norm = np.linalg.norm(g)
        third = np.zeros((3, 3))
        if g_norm > 0:
            step = THIRD_DERIVATIVE_STEP
            direction = g / g_norm
            if r[1] - step <= 0:
                step = 0.5 * r[1]
            third = g_norm * (self._rf_hessian(r + step * direction)
                              - self._rf_hessian(r - step * direction)) / (2 * step)
        hessian = 2 * self.k * (h @ h + third)

        if self._dc is not None:
            phi, grad, hess = self._dc.evaluate(r)
            u += self.charge_number * float(phi[0] @ self._dc_volts)
            gradient = gradient + self.charge_number * (grad[0].T @ self._dc_volts)
            hessian = hessian + self.charge_number * np.einsum('eij,e->ij', hess[0], self._dc_volts)
        if np.any(self.stray_field):
            u -= self.charge_number * float(self.stray_field @ r)
            gradient = gradient - self.charge_number * self.stray_field

        return u, gradient, 0.5 * (hessian + hessian.T)

    def dc_hessian(self, r) -> np.ndarray:
        """DC contribution to the Hessian (eV/m^2); traceless by Laplace."""
        if self._dc is None:
            return np.zeros((3, 3))
        _, _, hess = self._dc.evaluate(r)
        return self.charge_number * np.einsum('eij,e->ij', hess[0], self._dc_volts)


def _restrict(vector: np.ndarray, matrix: np.ndarray, axes: Sequence[int]):
    idx = np.asarray(axes)
    return vector[idx], matrix[np.ix_(idx, idx)]


def _simplex_step(potential: TrapPotential, r: np.ndarray, axes: Sequence[int],
                  box: Optional[float] = None) -> np.ndarray:
    """Derivative-free descent in micrometre units around r."""
    idx = list(axes)
    scale = constants.MICRON
    base = r.copy()

    def energy(u):
        trial = base.copy()
        trial[idx] = base[idx] + u * scale
        if trial[1] <= MIN_ION_HEIGHT:
            return math.inf
        return potential.energy(trial)

    bounds = None
    if box is not None:
        half = box / 2 / scale
        bounds = [(-half, half)] * len(idx)
    result = optimize.minimize(
        energy, np.zeros(len(idx)), method='Nelder-Mead', bounds=bounds,
        options={'xatol': 1e-7, 'fatol': 1e-15, 'maxiter': 4000},
    )
    out = base.copy()
    out[idx] = base[idx] + result.x * scale
    return out


def newton_minimize(potential: TrapPotential, seed, axes: Sequence[int] = (0, 1, 2),
                    gtol: float = GRADIENT_TOLERANCE, max_iter: int = MAX_ITERATIONS,
                    box: Optional[float] = None) -> np.ndarray:
    """
    Newton descent over the listed coordinate axes, other coordinates held
    fixed. Steps are backtracked until the energy decreases; when the
    restricted Hessian is not positive definite a simplex descent takes over
    for that iterate.
    """
    r = as_points(seed)[0].copy()
    idx = list(axes)
    fallbacks = 0

    for iteration in range(max_iter):
        u, gradient, hessian = potential.evaluate(r)
        g, h = _restrict(gradient, hessian, idx)
        if np.linalg.norm(g) < gtol:
            logger.debug(f"Newton converged after {iteration} iterations at {r}")
            return r

        try:
            factor = linalg.cho_factor(h)
        except linalg.LinAlgError:
            fallbacks += 1
            logger.warning(f"Hessian not positive definite at {r}; using simplex descent")
            r = _simplex_step(potential, r, idx, box)
            if r[1] <= MIN_ION_HEIGHT:
                raise EscapeError(f"Minimum search escaped to the surface (y = {r[1]:.3e} m)")
            if fallbacks > 5:
                raise ConvergenceError(f"Simplex fallback did not reach a convex region near {r}")
            continue

        step = -linalg.cho_solve(factor, g)
        slope = float(g @ step)
        tolerance = 64 * np.finfo(float).eps * max(1.0, abs(u))
        t = 1.0
        while True:
            trial = r.copy()
            trial[idx] = r[idx] + t * step
            if trial[1] > MIN_ION_HEIGHT and potential.energy(trial) <= u + 1e-4 * t * slope + tolerance:
                break
            t *= 0.5
            if t < 1e-12:
                raise ConvergenceError(f"Line search stalled at {r} (|grad| = {np.linalg.norm(g):.3e} eV/m)")
        r = trial
        if r[1] <= MIN_ION_HEIGHT:
            raise EscapeError(f"Minimum search escaped to the surface (y = {r[1]:.3e} m)")

    raise ConvergenceError(f"No convergence after {max_iter} iterations; last point {r}")


def pseudopotential(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies, p) -> float:
    """Ponderomotive energy q^2 |E_rf|^2 / (4 m Omega^2), in eV."""
    return TrapPotential(layout, drive, ion).pseudopotential(p)


def total_potential(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
                    ion: IonSpecies, p, stray_field=None) -> float:
    return TrapPotential(layout, drive, ion, volts, stray_field).energy(p)


def _axes_for(potential: TrapPotential) -> Tuple[int, ...]:
    # Without DC the rails give no axial confinement; hold z fixed.
    return (0, 1, 2) if potential.has_dc else (0, 1)


def find_minimum(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
                 ion: IonSpecies, seed, stray_field=None,
                 max_iter: int = MAX_ITERATIONS) -> FieldPoint:
    """Local minimum of the total potential reached from seed."""
    potential = TrapPotential(layout, drive, ion, volts, stray_field)
    r = newton_minimize(potential, seed, _axes_for(potential), max_iter=max_iter)
    return FieldPoint.from_array(r)


def rf_nil(layout: ElectrodeLayout, drive: RFDrive, ion: IonSpecies, z: float = 0.0,
           seed_height: float = 150e-6, seed_x: float = 0.0) -> FieldPoint:
    """Pseudopotential minimum in the transverse plane at axial position z."""
    potential = TrapPotential(layout, drive, ion)
    r = newton_minimize(potential, [seed_x, seed_height, z], axes=(0, 1))
    return FieldPoint.from_array(r)


def _signed_frequency(eigenvalue: float, mass: float) -> float:
    omega = math.sqrt(abs(eigenvalue) * constants.ELEMENTARY_CHARGE / mass)
    return omega if eigenvalue >= 0 else -omega


def _fold_angle(degrees: float) -> float:
    while degrees <= -90.0:
        degrees += 180.0
    while degrees > 90.0:
        degrees -= 180.0
    return degrees


def q_matrix(potential: TrapPotential, r) -> np.ndarray:
    """Mathieu q-matrix 2 q U0 H_rf / (m Omega^2)."""
    _, h = potential.rf_gradient(as_points(r)[0])
    q = 2 * potential.ion.charge * h / (potential.ion.mass * potential.drive.angular_frequency ** 2)
    return 0.5 * (q + q.T)


def secular_analysis(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
                     ion: IonSpecies, r0, stray_field=None) -> TrapReport:
    """
    Secular frequencies, principal axes, radial tilt and q-matrix at r0.

    Frequencies are sorted descending with the axes permuted to match; each
    axis is signed so its largest component is positive. A non-positive
    eigenvalue is reported as a negative (imaginary) frequency and flagged.
    """
    potential = TrapPotential(layout, drive, ion, volts, stray_field)
    r = as_points(r0)[0]
    _, _, hessian = potential.evaluate(r)

    eigenvalues, vectors = np.linalg.eigh(hessian)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    axes = vectors[:, order].T
    for i in range(3):
        if axes[i][np.argmax(np.abs(axes[i]))] < 0:
            axes[i] = -axes[i]

    frequencies = tuple(_signed_frequency(lam, ion.mass) for lam in eigenvalues)
    axial_index = int(np.argmax(np.abs(axes[:, 2])))
    radial = [i for i in range(3) if i != axial_index]
    in_plane = max(radial, key=lambda i: (abs(axes[i][0]), -i))
    tilt = _fold_angle(math.degrees(math.atan2(axes[in_plane][1], axes[in_plane][0])))

    q = q_matrix(potential, r)
    q_max = float(np.max(np.abs(np.linalg.eigvalsh(q))))
    g, _ = potential.rf_gradient(r)

    imaginary = any(f <= 0 for f in frequencies)
    if imaginary:
        logger.warning(f"Non-confining curvature at {r}: frequencies {frequencies}")
    if q_max >= STABILITY_LIMIT:
        logger.warning(f"Mathieu q = {q_max:.3f} exceeds the stability limit")

    return TrapReport(
        position=tuple(float(v) for v in r),
        ion_height=float(r[1]),
        frequencies=frequencies,
        principal_axes=tuple(tuple(float(v) for v in axis) for axis in axes),
        tilt_deg=float(tilt),
        q_matrix=tuple(tuple(float(v) for v in row) for row in q),
        q_max=q_max,
        stable=q_max < STABILITY_LIMIT,
        imaginary=imaginary,
        axial_index=axial_index,
        rf_field_residual=float(np.linalg.norm(g)),
    )


def _ridge(potential: TrapPotential, start: np.ndarray, height: float,
           axes: Sequence[int], box: float) -> Tuple[float, np.ndarray]:
    trial = start.copy()
    trial[1] = height
    r = newton_minimize(potential, trial, axes, gtol=RIDGE_TOLERANCE, box=box)
    return potential.energy(r), r


def trap_depth(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
               ion: IonSpecies, r0, stray_field=None, box: float = DEPTH_BOX,
               scan_points: int = DEPTH_SCAN_POINTS) -> TrapDepth:
    """
    Escape barrier above r0.

    The ridge R(y) is the total potential minimised over the transverse
    axes at fixed height. Its first maximum above r0 is the escape saddle;
    it is refined with a bounded scalar search. If the ridge keeps rising to
    the edge of the search box, the box-edge value is returned as a lower
    bound.
    """
    potential = TrapPotential(layout, drive, ion, volts, stray_field)
    r0 = as_points(r0)[0]
    u0 = potential.energy(r0)
    transverse = (0, 2) if potential.has_dc else (0,)

    heights = np.linspace(1.05 * r0[1], r0[1] + box / 2, scan_points)
    values, points = [], []
    current = r0.copy()
    found = False
    for y in heights:
        try:
            value, current = _ridge(potential, current, y, transverse, box)
        except ConvergenceError as exc:
            logger.warning(f"Ridge search stopped at y = {y:.3e} m: {exc}")
            break
        values.append(value)
        points.append(current.copy())
        if len(values) >= 3 and values[-2] >= values[-3] and values[-2] > values[-1]:
            found = True
            break

    if not found:
        last = points[-1] if points else r0
        bound = (values[-1] if values else u0) - u0
        logger.warning(f"No escape saddle inside the {box:.1e} m box; depth bounded below by {bound:.4f} eV")
        return TrapDepth(max(bound, 0.0), tuple(float(v) for v in last), True)

    i = len(values) - 2
    lower, upper = heights[i - 1], heights[i + 1]
    anchor = points[i]

    def negative_ridge(y):
        return -_ridge(potential, anchor, y, transverse, box)[0]

    refined = optimize.minimize_scalar(negative_ridge, bounds=(lower, upper), method='bounded',
                                       options={'xatol': 1e-9})
    saddle_value, saddle = _ridge(potential, anchor, refined.x, transverse, box)
    if values[i] > saddle_value:
        saddle_value, saddle = values[i], points[i]

    depth = saddle_value - u0
    logger.info(f"Trap depth {depth * 1e3:.2f} meV, escape at {saddle}")
    return TrapDepth(max(depth, 0.0), tuple(float(v) for v in saddle), False)


def micromotion_amplitude(report: TrapReport, displacement: Sequence[float]) -> np.ndarray:
    """First-order micromotion amplitude (Q / 2) d for an ion displaced by d from the RF nil."""
    return 0.5 * np.asarray(report.q_matrix) @ np.asarray(displacement, dtype=float)


def analyze_trap(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
                 ion: IonSpecies, seed=None, stray_field=None, box: float = DEPTH_BOX) -> TrapReport:
    """Minimum, secular analysis and both depths (total and RF-only) in one report."""
    if seed is None:
        seed = FieldPoint(0.0, 150e-6, 0.0)
    r0 = find_minimum(layout, drive, volts, ion, seed, stray_field)
    report = secular_analysis(layout, drive, volts, ion, r0, stray_field)
    total = trap_depth(layout, drive, volts, ion, r0, stray_field, box)

    nil = rf_nil(layout, drive, ion, z=r0.z, seed_height=r0.y, seed_x=r0.x)
    rf_only = trap_depth(layout, drive, {}, ion, nil, box=box)

    return replace(
        report,
        depth=total.depth,
        escape_point=total.escape_point,
        depth_bounded=total.bounded,
        rf_depth=rf_only.depth,
        rf_escape_point=rf_only.escape_point,
    )


def check_report(report: TrapReport) -> List[str]:
    """Invariant violations of a report; empty when it is consistent."""
    problems = []
    axes = np.asarray(report.principal_axes)
    if np.max(np.abs(axes @ axes.T - np.eye(3))) > 1e-10:
        problems.append("principal axes are not orthonormal")
    if report.depth is not None and report.depth < 0:
        problems.append(f"negative trap depth {report.depth}")
    if report.rf_depth is not None and report.rf_depth < 0:
        problems.append(f"negative RF depth {report.rf_depth}")
    if report.ion_height <= 0:
        problems.append("minimum below the surface")
    q = np.asarray(report.q_matrix)
    if np.max(np.abs(q - q.T)) > 1e-12 * max(1.0, np.max(np.abs(q))):
        problems.append("q-matrix is not symmetric")
    values = [*report.position, *report.frequencies, report.tilt_deg, report.q_max]
    if not all(math.isfinite(v) for v in values):
        problems.append("non-finite values in report")
    if not -90.0 < report.tilt_deg <= 90.0:
        problems.append(f"tilt {report.tilt_deg} outside (-90, 90]")
    return problems


def potential_line_scan(layout: ElectrodeLayout, drive: RFDrive, volts: Mapping[str, float],
                        ion: IonSpecies, r0, axis: int = 1, half_width: float = 300e-6,
                        points: int = 121, stray_field=None) -> List[Tuple[float, float, float]]:
    """(offset m, total eV, pseudopotential eV) along one coordinate axis through r0."""
    potential = TrapPotential(layout, drive, ion, volts, stray_field)
    r0 = as_points(r0)[0]
    rows = []
    for offset in np.linspace(-half_width, half_width, points):
        r = r0.copy()
        r[axis] += offset
        if r[1] <= 0:
            continue
        rows.append((float(offset), potential.energy(r), potential.pseudopotential(r)))
    return rows
