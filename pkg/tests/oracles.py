"""Independent reference values for the derived quantities.

Each function re-derives a value from first principles with
``scipy.constants`` only, without importing the package. ``FROZEN`` holds the
values these oracles produced; ``test_oracles.py`` checks the two still agree.
"""

import math

from scipy import constants as C

MASS = 1.40999e-25
LAMBDA = 780.241e-9
GAMMA_HZ = 6.0666e6
DEPTH = 450e-6 * C.k
WAIST = 7e-6
TEMPERATURE = 20e-6


def radial_frequency(depth=DEPTH, waist=WAIST, mass=MASS):
    # U ~ -U0 (1 - 2 r^2 / w^2) => m omega^2 = 4 U0 / w^2
    return math.sqrt(4 * depth / (mass * waist**2)) / (2 * math.pi)


def rayleigh_range(waist=WAIST, wavelength=780.24e-9):
    return math.pi * waist**2 / wavelength


def scattering_rate(depth=DEPTH, delta_hz=-500e9):
    return GAMMA_HZ / abs(delta_hz) * depth / C.hbar


def mean_occupation(temperature=TEMPERATURE, frequency=None):
    frequency = radial_frequency() if frequency is None else frequency
    return 1 / (math.exp(C.h * frequency / (C.k * temperature)) - 1)


def rms_spread(temperature=TEMPERATURE, frequency=None):
    frequency = radial_frequency() if frequency is None else frequency
    return math.sqrt(C.k * temperature / MASS) / (2 * math.pi * frequency)


def velocity_spread(temperature=TEMPERATURE):
    return math.sqrt(C.k * temperature / MASS)


def recoil_velocity():
    return C.h / (MASS * LAMBDA)


def ground_state_width(frequency=None):
    frequency = radial_frequency() if frequency is None else frequency
    return math.sqrt(C.hbar / (2 * MASS * 2 * math.pi * frequency))


def detuning_for_offset(delta_lambda=1e-9, wavelength=LAMBDA):
    return -C.c * delta_lambda / wavelength**2


def line_focus_depth(power=0.36, waist=WAIST, length=5e-3, delta_hz=-493e9):
    # peak of a Gaussian line: P = I0 * w sqrt(pi/2) * L
    intensity = power / (waist * math.sqrt(math.pi / 2) * length)
    omega0 = 2 * math.pi * C.c / LAMBDA
    return 3 * math.pi * C.c**2 * (2 * math.pi * GAMMA_HZ) / (2 * omega0**3 * 2 * math.pi * delta_hz) * intensity


def cell_area(pitch=0.4e-3, angle_deg=42.0):
    return pitch**2 / math.sin(math.radians(angle_deg))


def turning_point(sigma=1e-3):
    return sigma * math.sqrt(2 * math.log(2))


def free_width(sigma0, t, mass=MASS):
    return sigma0 * math.sqrt(1 + (C.hbar * t / (2 * mass * sigma0**2)) ** 2)


FROZEN = {
    "radial_frequency": 9545.352459898153,
    "rayleigh_range": 1.972957551854556e-4,
    "scattering_rate": 714.8171964130124,
    "mean_occupation": 43.160053825691826,
    "rms_spread": 7.378647873726218e-07,
    "velocity_spread": 0.044253601719129655,
    "recoil_velocity": 0.0060229773375245895,
    "ground_state_width": 7.896400141703577e-08,
    "detuning_for_offset": -492451162818.4924,
    "line_focus_depth_uK": -220.16932144440182,
    "cell_area": 2.391162479783374e-07,
    "turning_point": 1.1774100225154748e-3,
    "poisson_events": 35.74085982065062,
}
