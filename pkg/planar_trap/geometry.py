"""
Planar electrode layouts in the trap surface.

Coordinates: x transverse in the plane, z axial, y normal to the surface,
origin at the trap centre, metres throughout. Electrodes are unions of
axis-aligned rectangles; everything not covered by an electrode is grounded
plane. Rectangles map onto shapely boxes in the (x, z) plane for the overlap
and symmetry checks.
"""
import enum
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Tuple

from shapely import affinity
from shapely.geometry import box
from shapely.ops import unary_union

from . import constants
from .exceptions import GeometryError

logger = logging.getLogger(__name__)

SPLIT_GAP = 'split-gap'
SEGMENT_NAME = re.compile(r'^dc_([LR])(\d+)$')

# Areas below this (m^2) count as touching, not overlapping
AREA_TOLERANCE = 1e-20


class ElectrodeRole(enum.StrEnum):
    RF = 'RF'
    DC = 'DC'
    CENTRE_DC = 'CentreDC'
    GROUND = 'Ground'


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        values = (self.x_min, self.x_max, self.z_min, self.z_max)
        if not all(math.isfinite(v) for v in values):
            raise GeometryError(f"Rectangle extents must be finite, got {values}")
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise GeometryError(f"Rectangle needs x_min < x_max and z_min < z_max, got {values}")

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.z_min, self.z_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.z_max - self.z_min)

    def as_box(self):
        """Shapely polygon in the (x, z) plane"""
        return box(self.x_min, self.z_min, self.x_max, self.z_max)

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> 'Rect':
        return Rect(self.x_min + dx, self.x_max + dx, self.z_min + dz, self.z_max + dz)

    def mirrored_z(self) -> 'Rect':
        return Rect(self.x_min, self.x_max, -self.z_max, -self.z_min)


@dataclass(frozen=True)
class Electrode:
    name: str
    role: ElectrodeRole
    rects: Tuple[Rect, ...]

    def as_geometry(self):
        return unary_union([rect.as_box() for rect in self.rects])

    @property
    def is_rf(self) -> bool:
        return self.role == ElectrodeRole.RF


@dataclass(frozen=True)
class LayoutViolation:
    rule: str
    electrodes: Tuple[str, ...]
    message: str


@dataclass(frozen=True)
class ElectrodeLayout:
    electrodes: Tuple[Electrode, ...]
    gap_policy: str = SPLIT_GAP
    _index: Dict[str, Electrode] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'electrodes', tuple(self.electrodes))
        object.__setattr__(self, '_index', {e.name: e for e in self.electrodes})

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.electrodes]

    def __getitem__(self, name: str) -> Electrode:
        try:
            return self._index[name]
        except KeyError:
            raise GeometryError(f"Layout has no electrode named '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def by_role(self, *roles: ElectrodeRole) -> List[Electrode]:
        return [e for e in self.electrodes if e.role in roles]

    @property
    def rf_names(self) -> List[str]:
        return [e.name for e in self.by_role(ElectrodeRole.RF)]

    @property
    def segment_names(self) -> List[str]:
        return [e.name for e in self.electrodes if SEGMENT_NAME.match(e.name)]

    def segment_span(self) -> Tuple[float, float]:
        """Axial extent covered by the DC segment columns"""
        rects = [r for e in self.by_role(ElectrodeRole.DC) for r in e.rects]
        if not rects:
            raise GeometryError("Layout has no DC segments")
        return min(r.z_min for r in rects), max(r.z_max for r in rects)

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> 'ElectrodeLayout':
        return ElectrodeLayout(
            tuple(Electrode(e.name, e.role, tuple(r.translated(dx, dz) for r in e.rects))
                  for e in self.electrodes),
            self.gap_policy,
        )

    def mirrored_z(self) -> 'ElectrodeLayout':
        return ElectrodeLayout(
            tuple(Electrode(e.name, e.role, tuple(r.mirrored_z() for r in e.rects))
                  for e in self.electrodes),
            self.gap_policy,
        )

    def role_geometry(self, role: ElectrodeRole):
        return unary_union([e.as_geometry() for e in self.by_role(role)])

    def is_mirror_symmetric(self, axis: str = 'z', tolerance: float = AREA_TOLERANCE) -> bool:
        """
        True when every role's covered area maps onto itself under reflection
        of the named in-plane axis through the origin.
        """
        xfact, yfact = (1.0, -1.0) if axis == 'z' else (-1.0, 1.0)
        for role in ElectrodeRole:
            geometry = self.role_geometry(role)
            if geometry.is_empty:
                continue
            reflected = affinity.scale(geometry, xfact=xfact, yfact=yfact, origin=(0.0, 0.0))
            if geometry.symmetric_difference(reflected).area > tolerance:
                return False
        return True


def validate_layout(layout: ElectrodeLayout) -> List[LayoutViolation]:
    """
    Check the layout invariants.
    Returns: list of violations, empty when the layout is valid
    """
    violations = []

    for name, count in Counter(layout.names).items():
        if count > 1:
            violations.append(LayoutViolation(
                'name-collision', (name,), f"Electrode name '{name}' used {count} times"))

    for electrode in layout.electrodes:
        if not isinstance(electrode.role, ElectrodeRole):
            violations.append(LayoutViolation(
                'missing-role', (electrode.name,), f"Electrode '{electrode.name}' has no valid role"))
        if not electrode.rects:
            violations.append(LayoutViolation(
                'empty-electrode', (electrode.name,), f"Electrode '{electrode.name}' has no rectangles"))
            continue
        for i, j in combinations(range(len(electrode.rects)), 2):
            shared = electrode.rects[i].as_box().intersection(electrode.rects[j].as_box()).area
            if shared > AREA_TOLERANCE:
                violations.append(LayoutViolation(
                    'self-overlap', (electrode.name,),
                    f"Rectangles {i} and {j} of '{electrode.name}' overlap by {shared:.3e} m^2"))

    shapes = [(e.name, e.as_geometry()) for e in layout.electrodes if e.rects]
    for (name_a, shape_a), (name_b, shape_b) in combinations(shapes, 2):
        shared = shape_a.intersection(shape_b).area
        if shared > AREA_TOLERANCE:
            violations.append(LayoutViolation(
                'overlap', (name_a, name_b),
                f"Electrodes '{name_a}' and '{name_b}' overlap by {shared:.3e} m^2"))

    if not layout.by_role(ElectrodeRole.RF):
        violations.append(LayoutViolation('no-rf', (), "Layout has no RF electrode"))

    if violations:
        logger.debug(f"Layout validation found {len(violations)} violations")
    return violations


def segment_partner(name: str) -> Optional[str]:
    """dc_L3 <-> dc_R3; None for anything that is not a segment"""
    match = SEGMENT_NAME.match(name)
    if not match:
        return None
    side = 'R' if match.group(1) == 'L' else 'L'
    return f"dc_{side}{match.group(2)}"


def _rail_layout(centre_width: float, left_rf_width: float, right_rf_width: float,
                 left_rf_name: str, right_rf_name: str) -> ElectrodeLayout:
    pitch = constants.SEGMENT_PITCH
    count = constants.SEGMENT_COUNT

    # Effective widths after each boundary moves half a gap outward
    centre = centre_width + constants.GAP_WIDTH
    left_rf = left_rf_width + constants.GAP_WIDTH
    right_rf = right_rf_width + constants.GAP_WIDTH
    segment_width = constants.SEGMENT_TRANSVERSE_WIDTH

    z_min, z_max = -constants.RAIL_HALF_LENGTH, constants.RAIL_HALF_LENGTH

    x_centre_min, x_centre_max = -centre / 2, centre / 2
    x_left_outer = x_centre_min - left_rf
    x_right_outer = x_centre_max + right_rf

    electrodes = [
        Electrode(left_rf_name, ElectrodeRole.RF, (Rect(x_left_outer, x_centre_min, z_min, z_max),)),
        Electrode('centre', ElectrodeRole.CENTRE_DC, (Rect(x_centre_min, x_centre_max, z_min, z_max),)),
        Electrode(right_rf_name, ElectrodeRole.RF, (Rect(x_centre_max, x_right_outer, z_min, z_max),)),
    ]

    for k in range(1, count + 1):
        z_mid = (k - (count + 1) / 2) * pitch
        seg_z_min, seg_z_max = z_mid - pitch / 2, z_mid + pitch / 2
        electrodes.append(Electrode(
            f"dc_L{k}", ElectrodeRole.DC,
            (Rect(x_left_outer - segment_width, x_left_outer, seg_z_min, seg_z_max),)))
        electrodes.append(Electrode(
            f"dc_R{k}", ElectrodeRole.DC,
            (Rect(x_right_outer, x_right_outer + segment_width, seg_z_min, seg_z_max),)))

    logger.debug(f"Built rail layout with {len(electrodes)} electrodes")
    return ElectrodeLayout(tuple(electrodes), SPLIT_GAP)


def build_paper_layout() -> ElectrodeLayout:
    """
    Five-wire silicon trap: centre electrode flanked by a 200 um RF rail on
    the -x side and a 400 um RF rail on the +x side, seven DC segments per
    side. The 10 um gaps are split between neighbours, so the electrodes
    tile the plane and each drawn width grows by one full gap. The RF and
    centre rails run the full chip length (+/-5 mm); the segment columns
    cover only the middle 2.52 mm.
    """
    return _rail_layout(
        constants.CENTRE_WIDTH,
        constants.RF_NARROW_WIDTH,
        constants.RF_WIDE_WIDTH,
        'rf_narrow',
        'rf_wide',
    )


def build_symmetric_layout(rf_width: float = constants.RF_NARROW_WIDTH) -> ElectrodeLayout:
    """Control layout with equal RF rails; mirror symmetric in x and z."""
    return _rail_layout(constants.CENTRE_WIDTH, rf_width, rf_width, 'rf_left', 'rf_right')


def layout_from_rects(spec: Iterable[Tuple[str, str, Iterable[Iterable[float]]]],
                      gap_policy: str = SPLIT_GAP) -> ElectrodeLayout:
    """Build a layout from (name, role, [[x_min, x_max, z_min, z_max], ...]) triples."""
    electrodes = []
    for name, role, rects in spec:
        try:
            role = ElectrodeRole(role)
        except ValueError:
            raise GeometryError(f"Unknown electrode role '{role}' for '{name}'") from None
        electrodes.append(Electrode(name, role, tuple(Rect(*bounds) for bounds in rects)))
    return ElectrodeLayout(tuple(electrodes), gap_policy)
