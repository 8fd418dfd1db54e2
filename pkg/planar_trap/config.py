"""
Run configuration: JSON file values, then command-line overrides, on top of
settings.TRAP_DEFAULTS.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional

from django.conf import settings

from . import constants
from .exceptions import ConfigError, TrapDesignError
from .geometry import ElectrodeLayout, build_paper_layout, build_symmetric_layout
from .serializers import LayoutSerializer, RunConfigSerializer
from .trap_analysis import ION_PRESETS, IonSpecies, RFDrive
from .utils import read_json, validated
from .voltage_solver import SolveSpec

logger = logging.getLogger(__name__)

BUILTIN_LAYOUTS = {
    'paper': build_paper_layout,
    'symmetric': build_symmetric_layout,
}

FALLBACK_DEFAULTS = {
    'layout': 'paper',
    'amplitude_v': constants.RF_AMPLITUDE,
    'frequency_hz': constants.RF_FREQUENCY,
    'ion': 'ca40',
    'axial_frequency_hz': constants.AXIAL_FREQUENCY,
    'bound_v': constants.DC_VOLTAGE_BOUND,
    'allowed': ['centre', 'dc_L3', 'dc_L4', 'dc_L5', 'dc_R3', 'dc_R4', 'dc_R5'],
    'regularization': 1e-4,
    'pair_segments': True,
    'max_refinements': 3,
    'stray_field_v_per_m': [0.0, 0.0, 0.0],
    'seed_height_m': 150e-6,
    'depth_box_m': 5e-3,
    'output_dir': 'trap_output',
    'formats': 'both',
    'seed': 0,
    'montecarlo_runs': 100,
}


def get_defaults() -> Dict[str, object]:
    defaults = dict(FALLBACK_DEFAULTS)
    defaults.update(getattr(settings, 'TRAP_DEFAULTS', {}))
    return defaults


@dataclass(frozen=True)
class RunConfig:
    layout_source: str            # builtin layout name or path to a layout JSON file
    drive: RFDrive
    ion: IonSpecies
    solve_spec: SolveSpec
    output_dir: Path
    formats: str = 'both'
    seed: int = 0
    seed_height: float = 150e-6
    depth_box: float = 5e-3
    montecarlo_runs: int = 100
    values: Dict[str, object] = field(default_factory=dict, compare=False, repr=False)

    @property
    def layout_is_file(self) -> bool:
        return self.layout_source not in BUILTIN_LAYOUTS

    @property
    def write_json(self) -> bool:
        return self.formats in ('json', 'both')

    @property
    def write_csv(self) -> bool:
        return self.formats in ('csv', 'both')

    def load_layout(self) -> ElectrodeLayout:
        if not self.layout_is_file:
            return BUILTIN_LAYOUTS[self.layout_source]()
        return load_layout_file(self.layout_source)


def load_layout_file(path) -> ElectrodeLayout:
    data = read_json(Path(path), 'layout file')
    serializer = validated(LayoutSerializer, data, f"layout file {path}")
    try:
        return serializer.save()
    except TrapDesignError as exc:
        raise ConfigError(f"Invalid layout file {path}: {exc}") from exc


def _ion_from(values: Mapping[str, object]) -> IonSpecies:
    params = values.get('ion_params')
    if params:
        return IonSpecies(
            name=params.get('name', 'custom'),
            mass=params['mass_u'] * constants.ATOMIC_MASS_UNIT,
            charge=params['charge_e'] * constants.ELEMENTARY_CHARGE,
            wavelength=params['wavelength_m'],
            beam_angle=math.radians(params['beam_angle_deg']),
        )
    name = values['ion']
    if name not in ION_PRESETS:
        raise ConfigError(f"Unknown ion preset '{name}'; known presets: {', '.join(sorted(ION_PRESETS))}")
    return ION_PRESETS[name]()


def _merge(values: Dict[str, object], layer: Mapping[str, object]) -> None:
    # A layout given in a later layer replaces whichever source came before
    if 'layout' in layer or 'layout_file' in layer:
        values.pop('layout', None)
        values.pop('layout_file', None)
    if 'ion' in layer or 'ion_params' in layer:
        values.pop('ion', None)
        values.pop('ion_params', None)
    values.update(layer)


def parse_config(path=None, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """
    Build a RunConfig from an optional JSON file and flag overrides.

    Flags beat file values, file values beat TRAP_DEFAULTS. Unknown keys,
    malformed files, a missing layout file and conflicting layout sources
    raise ConfigError.
    """
    values = get_defaults()

    if path is not None:
        data = read_json(Path(path), 'config file')
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
        file_values = validated(RunConfigSerializer, data, f"config file {path}").validated_data
        _merge(values, file_values)

    flags = {k: v for k, v in (overrides or {}).items() if v is not None}
    if flags:
        flag_values = validated(RunConfigSerializer, flags, 'command-line options').validated_data
        _merge(values, flag_values)

    layout_source = values.get('layout_file') or values.get('layout', 'paper')
    if 'layout_file' in values and not Path(values['layout_file']).is_file():
        raise ConfigError(f"Layout file not found: {values['layout_file']}")

    try:
        drive = RFDrive.from_hz(float(values['amplitude_v']), float(values['frequency_hz']))
        ion = _ion_from(values)
        spec = SolveSpec(
            axial_frequency=constants.angular(float(values['axial_frequency_hz'])),
            stray_field=tuple(values.get('stray_field_v_per_m', (0.0, 0.0, 0.0))),
            allowed=tuple(values['allowed']),
            bound=float(values['bound_v']),
            regularization=float(values['regularization']),
            pair_segments=bool(values['pair_segments']),
            max_refinements=int(values['max_refinements']),
        )
    except ConfigError:
        raise
    except TrapDesignError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc

    config = RunConfig(
        layout_source=str(layout_source),
        drive=drive,
        ion=ion,
        solve_spec=spec,
        output_dir=Path(values['output_dir']),
        formats=values['formats'],
        seed=int(values['seed']),
        seed_height=float(values['seed_height_m']),
        depth_box=float(values['depth_box_m']),
        montecarlo_runs=int(values['montecarlo_runs']),
        values=values,
    )
    logger.debug(f"Parsed run config: layout {config.layout_source}, "
                 f"{drive.amplitude} V at {drive.frequency_hz / 1e6:.3f} MHz")
    return config


def config_summary(config: RunConfig) -> Dict[str, object]:
    """JSON-ready echo of the effective configuration."""
    spec = config.solve_spec
    return {
        'layout': config.layout_source,
        'amplitude_v': config.drive.amplitude,
        'frequency_hz': config.drive.frequency_hz,
        'ion': config.ion.name,
        'axial_frequency_hz': spec.axial_frequency / (2 * math.pi),
        'bound_v': spec.bound,
        'allowed': list(spec.allowed),
        'regularization': spec.regularization,
        'pair_segments': spec.pair_segments,
        'max_refinements': spec.max_refinements,
        'stray_field_v_per_m': list(spec.stray_field),
        'seed_height_m': config.seed_height,
        'depth_box_m': config.depth_box,
        'formats': config.formats,
        'seed': config.seed,
        'montecarlo_runs': config.montecarlo_runs,
    }
