"""
Closed-form fields of rectangular electrodes in a grounded plane.

A rectangle held at 1 V in an otherwise grounded infinite plane produces
phi(r) = solid angle / 2 pi. Each rectangle corner contributes one term
F = arctan(X Z / (y R)) with X = x_corner - x, Z = z_corner - z and
R = |(X, y, Z)|; the corner signs alternate so that phi = sum(s F) / 2 pi.
Gradients and Hessians are differentiated analytically from F.

Everything here is vectorised over points (N, 3) and rectangles (M, 4).
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FieldEvaluationError
from .geometry import ElectrodeLayout, Rect

logger = logging.getLogger(__name__)

# Evaluation heights below this are clamped; the corner terms lose precision
# right on the electrode edges.
MIN_HEIGHT = 1e-9

# (x column, z column, sign) for the four corners of [x_min, x_max, z_min, z_max]
_CORNERS = ((1, 3, 1.0), (0, 3, -1.0), (1, 2, -1.0), (0, 2, 1.0))


@dataclass(frozen=True)
class FieldPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not self.y > 0:
            raise FieldEvaluationError(f"Field points must lie above the surface (y > 0), got y={self.y}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, r: Sequence[float]) -> 'FieldPoint':
        return cls(float(r[0]), float(r[1]), float(r[2]))


@dataclass(frozen=True)
class BasisField:
    """Unit-voltage fields of named electrodes at one point."""
    names: Tuple[str, ...]
    potential: np.ndarray     # (E,)
    gradient: np.ndarray      # (E, 3), 1/m
    hessian: np.ndarray       # (E, 3, 3), 1/m^2

    def column(self, name: str) -> Tuple[float, np.ndarray, np.ndarray]:
        i = self.names.index(name)
        return self.potential[i], self.gradient[i], self.hessian[i]


def as_points(points) -> np.ndarray:
    """Coerce FieldPoint / sequence / array input to an (N, 3) array, rejecting y <= 0."""
    if isinstance(points, FieldPoint):
        arr = points.as_array()[None, :]
    else:
        arr = np.atleast_2d(np.asarray(points, dtype=float))
    if arr.shape[-1] != 3:
        raise FieldEvaluationError(f"Points must have 3 coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FieldEvaluationError("Points must be finite")
    if np.any(arr[:, 1] <= 0):
        raise FieldEvaluationError("Field evaluation requires y > 0 (above the electrode plane)")
    return arr


def as_bounds(rects) -> np.ndarray:
    if isinstance(rects, Rect):
        return np.array([rects.bounds], dtype=float)
    return np.array([r.bounds if isinstance(r, Rect) else r for r in rects], dtype=float).reshape(-1, 4)


def rect_fields(bounds: np.ndarray, points: np.ndarray, order: int = 2):
    """
    Potential, gradient and Hessian of unit-voltage rectangles.

    bounds: (M, 4) rows of [x_min, x_max, z_min, z_max]
    points: (N, 3) evaluation points, y > 0
    Returns: phi (N, M); grad (N, M, 3) if order >= 1; hess (N, M, 3, 3) if order >= 2
    """
    x = points[:, 0][:, None]
    y = np.maximum(points[:, 1], MIN_HEIGHT)[:, None]
    z = points[:, 2][:, None]

    n, m = points.shape[0], bounds.shape[0]
    phi = np.zeros((n, m))
    grad = np.zeros((n, m, 3)) if order >= 1 else None
    hess = np.zeros((n, m, 3, 3)) if order >= 2 else None

    y2 = y * y
    for xi, zi, sign in _CORNERS:
        X = bounds[:, xi][None, :] - x
        Z = bounds[:, zi][None, :] - z
        A = X * X + y2
        B = Z * Z + y2
        R2 = X * X + Z * Z + y2
        R = np.sqrt(R2)

        phi += sign * np.arctan2(X * Z, y * R)
        if order < 1:
            continue

        F_X = y * Z / (R * A)
        F_Z = y * X / (R * B)
        F_y = -X * Z * (R2 + y2) / (R * A * B)
        grad[..., 0] -= sign * F_X
        grad[..., 1] += sign * F_y
        grad[..., 2] -= sign * F_Z
        if order < 2:
            continue

        R3 = R2 * R
        F_XX = -X * y * Z * (A + 2 * R2) / (R3 * A * A)
        F_ZZ = -X * y * Z * (B + 2 * R2) / (R3 * B * B)
        F_XZ = y / R3
        F_Xy = Z * (A * (X * X + Z * Z) - 2 * y2 * R2) / (R3 * A * A)
        F_Zy = X * (B * (X * X + Z * Z) - 2 * y2 * R2) / (R3 * B * B)
        # Each corner term is harmonic
        F_yy = -(F_XX + F_ZZ)

        hess[..., 0, 0] += sign * F_XX
        hess[..., 1, 1] += sign * F_yy
        hess[..., 2, 2] += sign * F_ZZ
        hess[..., 0, 2] += sign * F_XZ
        hess[..., 0, 1] -= sign * F_Xy
        hess[..., 1, 2] -= sign * F_Zy

    scale = 1.0 / (2.0 * np.pi)
    phi *= scale
    if order >= 1:
        grad *= scale
    if order >= 2:
        hess *= scale
        hess[..., 2, 0] = hess[..., 0, 2]
        hess[..., 1, 0] = hess[..., 0, 1]
        hess[..., 2, 1] = hess[..., 1, 2]
    return phi, grad, hess


def rect_potential(rect: Rect, p) -> float:
    """Fraction of the rectangle's voltage seen at p (solid angle / 2 pi)."""
    phi, _, _ = rect_fields(as_bounds(rect), as_points(p), order=0)
    return float(phi[0, 0])


def rect_gradient(rect: Rect, p) -> np.ndarray:
    _, grad, _ = rect_fields(as_bounds(rect), as_points(p), order=1)
    return grad[0, 0]


def rect_hessian(rect: Rect, p) -> np.ndarray:
    _, _, hess = rect_fields(as_bounds(rect), as_points(p), order=2)
    return hess[0, 0]


class RectStack:
    """
    Flattened rectangles of a layout with an owner index per rectangle, so
    per-electrode sums come from a single vectorised evaluation.
    """

    def __init__(self, layout: ElectrodeLayout, names: Optional[Iterable[str]] = None):
        self.names = tuple(names) if names is not None else tuple(layout.names)
        bounds, owners = [], []
        for i, name in enumerate(self.names):
            for rect in layout[name].rects:
                bounds.append(rect.bounds)
                owners.append(i)
        self.bounds = np.array(bounds, dtype=float).reshape(-1, 4)
        self.owners = np.array(owners, dtype=int)

    def _sum_by_owner(self, values: np.ndarray) -> np.ndarray:
        # values: (N, M, ...) -> (N, E, ...)
        out = np.zeros((values.shape[0], len(self.names)) + values.shape[2:])
        np.add.at(out, (slice(None), self.owners), values)
        return out

    def evaluate(self, points, order: int = 2):
        pts = as_points(points)
        phi, grad, hess = rect_fields(self.bounds, pts, order=order)
        phi = self._sum_by_owner(phi)
        grad = self._sum_by_owner(grad) if grad is not None else None
        hess = self._sum_by_owner(hess) if hess is not None else None
        return phi, grad, hess

    def basis(self, p) -> BasisField:
        phi, grad, hess = self.evaluate(p)
        return BasisField(self.names, phi[0], grad[0], hess[0])


def electrode_basis(layout: ElectrodeLayout, p, names: Optional[Iterable[str]] = None) -> BasisField:
    """Unit-voltage potential, gradient and Hessian of each named electrode at p."""
    return RectStack(layout, names).basis(p)


def check_voltage_names(layout: ElectrodeLayout, volts: Mapping[str, float]) -> None:
    unknown = sorted(name for name in volts if name not in layout)
    if unknown:
        raise FieldEvaluationError(f"Voltages given for unknown electrodes: {', '.join(unknown)}")


def superpose(layout: ElectrodeLayout, volts: Mapping[str, float], p):
    """
    Potential (V), field E = -grad phi (V/m) and curvature (V/m^2) of a voltage
    assignment. Electrodes missing from volts sit at 0 V.

    A single point returns (float, (3,), (3, 3)); an (N, 3) array returns
    arrays with a leading N axis.
    """
    check_voltage_names(layout, volts)
    names = [name for name in layout.names if name in volts]
    single = isinstance(p, FieldPoint) or np.ndim(p) == 1
    pts = as_points(p)
    if not names:
        potential = np.zeros(len(pts))
        field = np.zeros((len(pts), 3))
        curvature = np.zeros((len(pts), 3, 3))
    else:
        v = np.array([volts[name] for name in names], dtype=float)
        phi, grad, hess = RectStack(layout, names).evaluate(pts)
        potential = phi @ v
        field = -np.einsum('nej,e->nj', grad, v)
        curvature = np.einsum('neij,e->nij', hess, v)
    if single:
        return float(potential[0]), field[0], curvature[0]
    return potential, field, curvature


def sample_grid(layout: ElectrodeLayout, volts: Mapping[str, float],
                xs: Sequence[float], ys: Sequence[float], zs: Sequence[float]) -> List[Tuple[float, ...]]:
    """Rows of (x, y, z, potential, Ex, Ey, Ez) over the Cartesian product of the axes."""
    grid = np.array(np.meshgrid(xs, ys, zs, indexing='ij')).reshape(3, -1).T
    potential, field, _ = superpose(layout, volts, grid)
    logger.info(f"Sampled {len(grid)} field points")
    return [tuple(float(v) for v in (*r, u, *e)) for r, u, e in zip(grid, potential, field)]
