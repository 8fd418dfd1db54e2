"""Physical constants and reference values for the silicon surface trap.

CODATA-2018 values are fixed here rather than taken from ``scipy.constants``
so results do not drift when scipy updates its constant tables.
"""
import math

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19      # C
HBAR = 1.054571817e-34                   # J s
ATOMIC_MASS_UNIT = 1.66053906660e-27     # kg
BOLTZMANN = 1.380649e-23                 # J/K

CA40_MASS_U = 39.9625909
CA40_WAVELENGTH = 729e-9                 # S1/2 - D5/2 quadrupole transition, m
CA40_BEAM_ANGLE_DEG = 45.0

MICRON = 1e-6

# Electrode geometry (drawn widths, before gap absorption)
GAP_WIDTH = 10 * MICRON
CENTRE_WIDTH = 250 * MICRON
RF_NARROW_WIDTH = 200 * MICRON
RF_WIDE_WIDTH = 400 * MICRON
SEGMENT_LENGTH = 350 * MICRON
SEGMENT_COUNT = 7
SEGMENT_TRANSVERSE_WIDTH = 2e-3
SEGMENT_PITCH = SEGMENT_LENGTH + GAP_WIDTH
# Axial half-length of the RF and centre rails; the segment column is shorter
RAIL_HALF_LENGTH = 5e-3

# Drive and confinement
RF_AMPLITUDE = 140.0                     # V, zero-to-peak
RF_FREQUENCY = 20.6e6                    # Hz
DC_VOLTAGE_BOUND = 40.0                  # V
AXIAL_FREQUENCY = 1.069e6                # Hz
ION_HEIGHT = 230 * MICRON
TRAP_DEPTH = 0.075                       # eV
RADIAL_TILT_DEG = 20.0

# Resonator (values at the 10 K stage)
RESONATOR_INDUCTANCE = 6.3e-6            # H
RESONATOR_CAPACITANCE = 9.5e-12          # F
RESONATOR_Q_LOW_T = 1205.0
SILICON_LOSS_TANGENT_295K = 1.5
FUSED_SILICA_LOSS_TANGENT = 1e-4
SILICON_PARTICIPATION = 0.9
# Same electrode pattern on a glass substrate
FUSED_SILICA_PARTICIPATION = 0.9
# Freeze-out activation temperature E_a / k_B; places tan(delta) below 1e-6 at 25 K
SILICON_ACTIVATION_TEMPERATURE = 400.0   # K
INDUCTOR_Q_295K = 400.0
INDUCTOR_Q_10K = 1300.0

# Capacitive pick-off divider as stated: one 1000 pF and two 5 pF parts
DIVIDER_STATED_RATIO = 400.0
DIVIDER_STATED_TOTAL = 2.5e-12           # F
DIVIDER_LARGE = 1000e-12
DIVIDER_SMALL = 5e-12

# Matching network and RF grounding
MATCHING_CAPACITOR_RANGE = (12e-12, 100e-12)
MATCHING_INDUCTANCE = 186e-9
RF_GROUNDING_CAPACITANCE = 470e-12

# DC filters
ONCHIP_FILTER_R = 100.0
ONCHIP_FILTER_C = 330e-9
ONCHIP_FILTER_CUTOFF = 4.8e3
EXTERNAL_FILTER_R = 20e3
EXTERNAL_FILTER_C = 100e-9
EXTERNAL_FILTER_STAGES = 6
EXTERNAL_FILTER_CUTOFF = 80.0

# Heating-rate survey: (trap, rate phonons/s, 1 sigma, axial frequency Hz)
HEATING_TABLE = (
    (1, 0.6, 0.2, 1.069e6),
    (2, 3.3, 0.2, 1.059e6),
    (3, 0.96, 0.07, 1.069e6),
    (4, 0.95, 0.07, 1.045e6),
    (5, 0.33, 0.04, 1.066e6),
    (6, 21.5, 0.8, 1.073e6),
)
NOISE_DENSITY_TRAP1 = 4.4e-15            # V^2 m^-2 Hz^-1
REFERENCE_HEATING_RATE = 0.37            # phonons/s


def angular(frequency_hz: float) -> float:
    return 2.0 * math.pi * frequency_hz
